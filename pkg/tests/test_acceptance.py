"""Acceptance criteria 1-11, one test each, at their stated tolerances.

A PASS/FAIL line per criterion is printed in the terminal summary. Studies
use the default master seed of ``StudyConfig``; each Monte Carlo study is run
once and shared between the criteria that read it.
"""

import functools
import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from sharpbounds.bounds import (
    aronow_bounds,
    brute_force_extremes,
    ding_bounds,
    extremal_population,
    phi2_tau,
    sharp_bounds_cov,
    sharp_bounds_late,
)
from sharpbounds.estimate import diff_in_means
from sharpbounds.late import lambda_hats, late_bound_estimates, pi_c_hat
from sharpbounds.population import COMPLIER, FinitePopulation, adjusted_outcomes, conditional_cdf, reveal
from sharpbounds.simulate import (
    StudyConfig,
    complete_randomization,
    example1_population,
    population_truth,
    replication_rng,
    run_study,
    study_population,
)
from sharpbounds.transport import (
    SignedStepFunction,
    StepCDF,
    generalized_inverse,
    monotone_envelope,
    quantile_l2_antimonotone,
    quantile_l2_comonotone,
    representation_check,
)

REPS = 1000


@functools.lru_cache(maxsize=None)
def study(scenario, N, attain_lower=False):
    return run_study(StudyConfig(scenario=scenario, N=N, reps=REPS, attain_lower=attain_lower))


def test_criterion_01_example1(criterion):
    criterion("criterion 1: Example-1 orderings and exact values")
    start = time.perf_counter()
    worst = 0.0
    for j in range(1, 201):
        pop = example1_population(j)
        s, a, d = sharp_bounds_cov(pop), aronow_bounds(pop), ding_bounds(pop)
        assert s.lower >= max(a.lower, d.lower) - 1e-9
        assert s.upper <= min(a.upper, d.upper) + 1e-9
        worst = min(worst, s.lower - max(a.lower, d.lower), min(a.upper, d.upper) - s.upper)
    pop = example1_population(150)
    s, a = sharp_bounds_cov(pop), aronow_bounds(pop)
    got = tuple(float(v) for v in (s.lower, s.upper, a.lower, a.upper))
    assert got == pytest.approx((2 / 9, 5 / 9, 2 / 9, 8 / 9), abs=1e-12)
    elapsed = time.perf_counter() - start
    criterion("criterion 1: Example-1 orderings and exact values",
              f"min dominance margin {worst:.2e}; p=3/4 -> {tuple(round(v, 12) for v in got)}; "
              f"{elapsed:.2f}s")
    assert elapsed < 1.0


def _random_population(rng):
    N = int(rng.integers(2, 201))
    K = int(rng.integers(1, min(N, 5) + 1))
    w = np.concatenate([np.arange(K), rng.integers(0, K, N - K)])
    y1 = np.round(rng.normal(0, 3, N), 1)
    y0 = np.round(rng.normal(1, 2, N), 1)
    return FinitePopulation(y1, y0, w, tuple(range(K)))


def test_criterion_02_sharpness(criterion):
    label = "criterion 2: sharpness attained on 100 random populations"
    criterion(label)
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        pop = _random_population(rng)
        b = sharp_bounds_cov(pop)
        assert b.contains(phi2_tau(pop), tol=0)
        for which in ("lower", "upper"):
            out = extremal_population(pop, which)
            for t, k in itertools.product((0, 1), pop.labels):
                assert conditional_cdf(out, t, k).same_distribution(conditional_cdf(pop, t, k))
            assert np.array_equal(np.bincount(out.w), np.bincount(pop.w))
            gap = abs(phi2_tau(out) - getattr(b, which))
            worst = max(worst, gap)
            assert gap <= 1e-10
    elapsed = time.perf_counter() - start
    criterion(label, f"max attainment gap {worst:.1e}; {elapsed:.2f}s")
    assert elapsed < 5.0


def test_criterion_03_rearrangement_oracle(criterion):
    label = "criterion 3: brute-force permutations equal coupling integrals"
    criterion(label)
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    for _ in range(200):
        m = int(rng.integers(1, 8))
        a = rng.integers(-20, 21, m).astype(float)
        b = rng.integers(-20, 21, m).astype(float)
        lo, hi = brute_force_extremes(a, b)
        F, G = StepCDF.from_sample(a), StepCDF.from_sample(b)
        assert lo == quantile_l2_comonotone(F, G)
        assert hi == quantile_l2_antimonotone(F, G)
    elapsed = time.perf_counter() - start
    criterion(label, f"200 strata exact; {elapsed:.2f}s")
    assert elapsed < 5.0


def test_criterion_04_representation(criterion):
    label = "criterion 4: double-integral identity on 500 step-CDF pairs"
    criterion(label)
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    worst = 0.0

    def random_cdf():
        m = int(rng.integers(1, 9))
        support = np.sort(rng.choice(np.linspace(-5, 5, 401), m, replace=False))
        return StepCDF.from_counts(support, rng.integers(1, 20, m))

    for _ in range(500):
        F, G = random_cdf(), random_cdf()
        worst = max(worst, abs(representation_check(F, G) - quantile_l2_comonotone(F, G)))
    elapsed = time.perf_counter() - start
    criterion(label, f"max |difference| {worst:.1e}; {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 5.0


def test_criterion_05_design_moments(criterion):
    label = "criterion 5: assignment enumeration gives exact mean and variance"
    criterion(label)
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    worst = 0.0
    checked = 0
    for N in range(2, 11):
        for _ in range(3):
            y1, y0 = rng.normal(0, 2, N), rng.normal(1, 1, N)
            pop = FinitePopulation.build(y1, y0)
            tau = y1 - y0
            for n1 in range(1, N):
                n0 = N - n1
                ests = []
                for treated in itertools.combinations(range(N), n1):
                    t = np.zeros(N, dtype=int)
                    t[list(treated)] = 1
                    ests.append(diff_in_means(reveal(pop, t)))
                ests = np.array(ests)
                sigma2 = N / n1 * np.var(y1) + N / n0 * np.var(y0) - np.var(tau)
                err_mean = abs(ests.mean() - tau.mean())
                err_var = abs(ests.var() - sigma2 / (N - 1))
                worst = max(worst, err_mean, err_var)
                checked += 1
                assert err_mean <= 1e-10 and err_var <= 1e-10
    elapsed = time.perf_counter() - start
    criterion(label, f"{checked} (population, n1) designs; max error {worst:.1e}; {elapsed:.2f}s")
    assert elapsed < 10.0


def test_criterion_06_population_table(criterion):
    label = "criterion 6: population bounds for a fresh N=2000 draw"
    criterion(label)
    start = time.perf_counter()
    pop = study_population(StudyConfig(N=2000, reps=1))
    b = sharp_bounds_cov(pop)
    phi = phi2_tau(pop)
    elapsed = time.perf_counter() - start
    criterion(label, f"lower {b.lower:.3f}, upper {b.upper:.3f}, phi2(tau) {phi:.3f}; {elapsed:.2f}s")
    assert 8.0 <= b.lower <= 10.5
    assert 38 <= b.upper <= 47
    assert 16 <= phi <= 21
    assert elapsed < 10.0


def test_criterion_07_interval_study(criterion):
    label = "criterion 7: N=800 interval widths and coverage"
    criterion(label)
    rep = study("perfect", 800)
    sharp, naive = rep.intervals["sharp"], rep.intervals["naive-zero"]
    criterion(label, f"sharp AW {sharp['aw']:.4f} CR {sharp['cr']:.3f}; naive AW {naive['aw']:.4f}; "
                     f"excluded {rep.excluded}")
    assert abs(sharp["aw"] - 0.945) <= 0.05
    assert 0.955 <= sharp["cr"] <= 0.985
    assert sharp["aw"] < naive["aw"]


def test_criterion_08_consistency_trend(criterion):
    label = "criterion 8: bound-estimator RMSE falls from N=400 to N=2000"
    criterion(label)
    parts = []
    for scenario, fam in (("perfect", "sharp"), ("noncompliance", "sharp-late")):
        small, large = study(scenario, 400).estimators[fam], study(scenario, 2000).estimators[fam]
        for side in ("lower_rmse", "upper_rmse"):
            parts.append(f"{fam} {side.split('_')[0]} {small[side]:.3f}->{large[side]:.3f}")
        criterion(label, "; ".join(parts))
        assert large["lower_rmse"] < small["lower_rmse"]
        assert large["upper_rmse"] < small["upper_rmse"]


def test_criterion_09_late_study(criterion):
    label = "criterion 9: noncompliance bounds and N=2000 intervals"
    criterion(label)
    for N in (400, 800, 2000):
        t = population_truth(study_population(StudyConfig(scenario="noncompliance", N=N, reps=1)),
                             "noncompliance")["bounds"]
        assert t["sharp-late"]["lower"] > t["sharp-late-nocov"]["lower"]
        assert t["sharp-late"]["upper"] < t["sharp-late-nocov"]["upper"]
    rep = study("noncompliance", 2000)
    lc, hc = rep.truth["bounds"]["sharp-late"]["lower"], rep.truth["bounds"]["sharp-late"]["upper"]
    iv = rep.intervals["sharp-late"]
    criterion(label, f"LC {lc:.3f} HC {hc:.3f}; AW {iv['aw']:.4f} CR {iv['cr']:.3f}; "
                     f"excluded {rep.excluded}")
    assert 8.0 <= lc <= 11.5
    assert 25 <= hc <= 32
    assert 0.95 <= iv["cr"] <= 0.985
    assert abs(iv["aw"] - 0.893) <= 0.06


def test_criterion_10_worst_case_coverage(criterion):
    label = "criterion 10: coverage when the effect variance sits at its lower bound"
    criterion(label)
    ate_rep = study("perfect", 800, True)
    late_rep = study("noncompliance", 2000, True)
    cr, cr_c = ate_rep.intervals["sharp"]["cr"], late_rep.intervals["sharp-late"]["cr"]
    gap = abs(ate_rep.truth["phi2"] - ate_rep.truth["bounds"]["sharp"]["lower"])
    criterion(label, f"sharp CR {cr:.3f}; sharp-late CR {cr_c:.3f}; attained gap {gap:.1e}")
    assert gap <= 1e-10
    assert cr >= 0.935
    assert cr_c >= 0.935


def test_criterion_11_structural_identities(criterion):
    label = "criterion 11: structural identities"
    criterion(label)
    for seed, N in itertools.product(range(3), (400, 800, 2000)):
        pop = study_population(StudyConfig(scenario="noncompliance", N=N, reps=1, seed=seed))
        yt1, yt0 = adjusted_outcomes(pop)
        tt = yt1 - yt0
        assert np.all(tt[pop.compliance != COMPLIER] == 0)
        assert abs(tt.mean()) <= 1e-12
        b = sharp_bounds_late(pop)
        assert b.lower <= b.upper

    pop = study_population(StudyConfig(scenario="noncompliance", N=400, reps=1))
    for r in range(50):
        s = reveal(pop, complete_randomization(pop.N, pop.N // 2, replication_rng(11, r)))
        pc = pi_c_hat(s, exact=True)
        lam1 = {k: lambda_hats(s, k, exact=True)[0] for k in s.labels}
        assert sum(lam1.values()) == pc
        for k in s.labels:
            assert isinstance(lam1[k], Fraction)
            assert pc * (lam1[k] / pc) == lam1[k]
        raw = late_bound_estimates(s, via="raw")
        env = late_bound_estimates(s, via="envelope")
        assert (raw.lower, raw.upper) == (env.lower, env.upper)

    rng = np.random.default_rng(1111)
    for _ in range(500):
        m = int(rng.integers(1, 10))
        denom = int(rng.integers(1, 25))
        nums = np.append(rng.integers(-denom, 2 * denom + 1, m - 1), denom)
        H = SignedStepFunction(np.sort(rng.choice(200, m, replace=False)) / 10, nums, denom)
        E = monotone_envelope(H)
        for num in range(1, denom + 1):
            u = Fraction(num, denom)
            assert generalized_inverse(H, u) == generalized_inverse(E, u)
        for j in range(1, 100):
            assert generalized_inverse(H, Fraction(j, 100)) == generalized_inverse(E, Fraction(j, 100))
    criterion(label, "9 populations, 50 samples, 500 signed step functions")
