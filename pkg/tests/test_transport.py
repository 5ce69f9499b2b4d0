from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import coupling_integrals
from sharpbounds.errors import DomainError
from sharpbounds.transport import (
    SignedStepFunction,
    StepCDF,
    generalized_inverse,
    monotone_envelope,
    quantile_l2_antimonotone,
    quantile_l2_comonotone,
    representation_check,
    sorted_pairing_sum,
)

small_ints = st.lists(st.integers(-6, 6), min_size=1, max_size=7)


@st.composite
def step_cdfs(draw, max_atoms=5, max_denom=12):
    support = sorted(draw(st.sets(st.integers(-10, 10), min_size=1, max_size=max_atoms)))
    counts = draw(st.lists(st.integers(1, max_denom), min_size=len(support),
                           max_size=len(support)))
    return StepCDF.from_counts([s / 2 for s in support], counts)


@st.composite
def signed_steps(draw):
    m = draw(st.integers(1, 8))
    bp = sorted(draw(st.sets(st.integers(-20, 20), min_size=m, max_size=m)))
    denom = draw(st.integers(1, 12))
    nums = draw(st.lists(st.integers(-denom, 2 * denom), min_size=m - 1, max_size=m - 1))
    return SignedStepFunction(np.array(bp, float), nums + [denom], denom)


class TestStepCDF:
    def test_from_sample_counts_ties(self):
        F = StepCDF.from_sample([1, 2, 2, 5])
        assert F.support.tolist() == [1, 2, 5]
        assert F.cum.tolist() == [1, 3, 4] and F.denom == 4

    def test_evaluation_right_continuous(self):
        F = StepCDF.from_sample([0, 1])
        assert F(-0.5) == 0 and F(0) == 0.5 and F(0.99) == 0.5 and F(1) == 1

    def test_rejects_mass_deficit(self):
        with pytest.raises(DomainError):
            StepCDF.from_cumulative([0, 1], [0.3, 0.9])

    def test_renormalizes_tiny_deficit(self):
        F = StepCDF.from_cumulative([0, 1], [0.5, 1 - 1e-12])
        assert F(1) == 1.0

    def test_rejects_unsorted_support(self):
        with pytest.raises(DomainError):
            StepCDF(np.array([1.0, 0.0]), [1, 2], 2)

    def test_same_distribution_ignores_representation(self):
        a = StepCDF.from_sample([0, 1])
        b = StepCDF.from_counts([1, 0], [3, 3])
        assert a.same_distribution(b)
        assert not a.same_distribution(StepCDF.from_sample([0, 1, 1]))


class TestGeneralizedInverse:
    def test_cdf_examples(self):
        F = StepCDF.from_sample([1, 2, 2, 5])
        assert generalized_inverse(F, 0.75) == 2
        assert generalized_inverse(F, 0.76) == 5
        assert generalized_inverse(F, 1) == 5

    def test_point_mass(self):
        F = StepCDF.from_sample([3.5])
        for u in (0.01, 0.5, 1.0):
            assert generalized_inverse(F, u) == 3.5

    def test_signed_function_takes_first_crossing(self):
        H = SignedStepFunction.from_values([0, 1, 2], [0.4, 0.3, 1.0])
        # H(0) = 0.4 already reaches 0.35, so the infimum is 0
        assert generalized_inverse(H, 0.35) == 0
        # 0.5 is first reached at s = 2; the dip at s = 1 is skipped
        assert generalized_inverse(H, 0.5) == 2

    def test_excursions_outside_unit_interval(self):
        H = SignedStepFunction(np.array([0.0, 1.0]), [-1, 2], 2)
        assert generalized_inverse(H, 1) == 1
        H2 = SignedStepFunction(np.array([0.0]), [3], 3)
        assert generalized_inverse(H2, Fraction(1, 3)) == 0

    @pytest.mark.parametrize("u", [0, -0.1, 1.01])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            generalized_inverse(StepCDF.from_sample([1]), u)


class TestEnvelope:
    def test_running_max(self):
        H = SignedStepFunction.from_values([0, 1, 2], [0.5, 0.3, 1.0])
        E = monotone_envelope(H)
        assert E.values.tolist() == [0.5, 0.5, 1.0]

    def test_monotone_input_unchanged(self):
        H = SignedStepFunction.from_values([0, 1, 2], [0.25, 0.5, 1.0])
        E = monotone_envelope(H)
        assert E.same_distribution(StepCDF.from_cumulative([0, 1, 2], [0.25, 0.5, 1.0]))

    def test_negative_excursions_clamped(self):
        H = SignedStepFunction(np.array([0.0, 1.0, 2.0]), [-2, 5, 4], 4)
        E = monotone_envelope(H)
        assert E.values.min() >= 0 and E.values.max() == 1

    @given(signed_steps())
    def test_inverse_shared_on_grid(self, H):
        E = monotone_envelope(H)
        for j in range(1, 100):
            u = Fraction(j, 100)
            assert generalized_inverse(E, u) == generalized_inverse(H, u)

    @given(signed_steps())
    def test_inverse_shared_at_every_level(self, H):
        E = monotone_envelope(H)
        for num in range(1, H.denom + 1):
            u = Fraction(num, H.denom)
            assert generalized_inverse(E, u) == generalized_inverse(H, u)


class TestCouplings:
    def test_bernoulli_examples(self):
        F = StepCDF.from_counts([0, 1], [1, 2])  # Bernoulli(2/3)
        G = StepCDF.from_counts([0, 1], [2, 1])  # Bernoulli(1/3)
        assert quantile_l2_comonotone(F, G) == pytest.approx(1 / 3, abs=1e-15)
        assert quantile_l2_antimonotone(F, G) == pytest.approx(1.0, abs=1e-15)
        assert representation_check(F, G) == pytest.approx(1 / 3, abs=1e-15)

    def test_identical_fair_coins(self):
        F = StepCDF.from_sample([0, 1])
        assert quantile_l2_comonotone(F, F) == 0
        assert quantile_l2_antimonotone(F, F) == 1
        assert representation_check(F, F) == 0

    def test_point_masses(self):
        F, G = StepCDF.from_sample([2.0]), StepCDF.from_sample([-1.5])
        assert quantile_l2_comonotone(F, G) == 12.25
        assert quantile_l2_antimonotone(F, G) == 12.25

    def test_overshooting_signed_function_has_finite_quantiles(self):
        H = SignedStepFunction(np.array([0.0, 1.0]), [3, 2], 2)
        # values above one are legal for signed functions; their quantiles are finite
        assert np.isfinite(quantile_l2_comonotone(H, StepCDF.from_sample([0])))

    @given(step_cdfs(), step_cdfs())
    def test_matches_atom_expansion_oracle(self, F, G):
        co, anti = coupling_integrals(F, G)
        assert quantile_l2_comonotone(F, G) == pytest.approx(float(co), rel=1e-12, abs=1e-12)
        assert quantile_l2_antimonotone(F, G) == pytest.approx(float(anti), rel=1e-12, abs=1e-12)

    @given(step_cdfs(), step_cdfs())
    def test_ordering_and_symmetry(self, F, G):
        co, anti = quantile_l2_comonotone(F, G), quantile_l2_antimonotone(F, G)
        assert 0 <= co <= anti + 1e-12
        assert co == pytest.approx(quantile_l2_comonotone(G, F), abs=1e-12)
        assert anti == pytest.approx(quantile_l2_antimonotone(G, F), abs=1e-12)

    @given(step_cdfs(), st.integers(-8, 8))
    def test_zero_iff_equal(self, F, shift):
        G = F.shifted(shift / 4)
        assert (quantile_l2_comonotone(F, G) == 0) == (shift == 0)

    @given(step_cdfs(), step_cdfs(), st.integers(-16, 16))
    def test_translation_invariance(self, F, G, c):
        c = c / 8  # dyadic shift keeps every difference exact
        assert quantile_l2_comonotone(F.shifted(c), G.shifted(c)) == quantile_l2_comonotone(F, G)

    @given(small_ints, st.data())
    def test_sorted_pairing_identity(self, a, data):
        b = data.draw(st.lists(st.integers(-6, 6), min_size=len(a), max_size=len(a)))
        F, G = StepCDF.from_sample(a), StepCDF.from_sample(b)
        assert quantile_l2_comonotone(F, G) == sorted_pairing_sum(a, b)
        assert quantile_l2_antimonotone(F, G) == sorted_pairing_sum(a, b, reverse=True)

    @given(step_cdfs(max_atoms=6, max_denom=30), step_cdfs(max_atoms=6, max_denom=30))
    def test_representation_identity(self, F, G):
        assert abs(representation_check(F, G) - quantile_l2_comonotone(F, G)) <= 1e-9

    def test_signed_inputs_use_envelope_quantiles(self):
        H = SignedStepFunction.from_values([0, 1, 2], [0.4, 0.3, 1.0])
        G = StepCDF.from_sample([1.0])
        E = monotone_envelope(H)
        assert quantile_l2_comonotone(H, G) == quantile_l2_comonotone(E, G)
        assert quantile_l2_antimonotone(H, G) == quantile_l2_antimonotone(E, G)
