"""Population-level bounds on the variance of unit-level treatment effects."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesignError, DomainError, RegressionError
from .population import (
    COMPLIER,
    FinitePopulation,
    adjusted_outcomes,
    ate,
    check_late_assumptions,
    late_truth,
    pop_variance,
)
from .transport import StepCDF, quantile_l2_antimonotone, quantile_l2_comonotone

FAMILIES = ("sharp", "aronow", "ding", "sharp-late", "sharp-late-nocov")
TIE_TOLERANCE = 1e-12
PIVOT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class BoundPair:
    lower: float
    upper: float
    family: str
    level: str = "population"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown bound family {self.family!r}")
        if self.level not in ("population", "plugin"):
            raise DomainError(f"unknown level {self.level!r}")
        if self.lower > self.upper + TIE_TOLERANCE * max(1.0, abs(self.upper)):
            raise DomainError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "family": self.family,
                "level": self.level}


def _stratified_couplings(y1, y0, w, K, shares):
    lo = hi = 0.0
    for k in range(K):
        m = w == k
        if not m.any():
            raise DegenerateDesignError(f"stratum {k} is empty")
        F1, F0 = StepCDF.from_sample(y1[m]), StepCDF.from_sample(y0[m])
        lo += shares[k] * quantile_l2_comonotone(F1, F0)
        hi += shares[k] * quantile_l2_antimonotone(F1, F0)
    return lo, hi


def sharp_bounds_cov(pop: FinitePopulation) -> BoundPair:
    shares = np.bincount(pop.w, minlength=pop.K) / pop.N
    lo, hi = _stratified_couplings(pop.y1, pop.y0, pop.w, pop.K, shares)
    theta2 = ate(pop) ** 2
    return BoundPair(lo - theta2, hi - theta2, "sharp")


def aronow_bounds(pop: FinitePopulation) -> BoundPair:
    F1, F0 = StepCDF.from_sample(pop.y1), StepCDF.from_sample(pop.y0)
    theta2 = ate(pop) ** 2
    return BoundPair(quantile_l2_comonotone(F1, F0) - theta2,
                     quantile_l2_antimonotone(F1, F0) - theta2, "aronow")


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Least-squares fit of each arm's outcome on the stratum design."""

    coefficients: tuple  # (gamma_1, gamma_0)
    residuals: tuple  # (e_1, e_0)
    contrast: np.ndarray  # fitted treatment contrast on every unit


def design_matrix(codes, K: int) -> np.ndarray:
    """Intercept plus K-1 dummies, first stratum as baseline."""
    codes = np.asarray(codes)
    X = np.zeros((codes.size, K))
    X[:, 0] = 1.0
    for k in range(1, K):
        X[:, k] = codes == k
    return X


def least_squares(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1] or (sv.size and sv[-1] < PIVOT_TOLERANCE * max(sv[0], 1.0)):
        raise RegressionError("design matrix is rank deficient (a stratum has no units)")
    return coef


def fit_population_regression(pop: FinitePopulation) -> RegressionFit:
    X = design_matrix(pop.w, pop.K)
    g1, g0 = least_squares(X, pop.y1), least_squares(X, pop.y0)
    return RegressionFit((g1, g0), (pop.y1 - X @ g1, pop.y0 - X @ g0), X @ (g1 - g0))


def ding_bounds(pop: FinitePopulation) -> BoundPair:
    fit = fit_population_regression(pop)
    base = pop_variance(fit.contrast)
    E1, E0 = StepCDF.from_sample(fit.residuals[0]), StepCDF.from_sample(fit.residuals[1])
    return BoundPair(base + quantile_l2_comonotone(E1, E0),
                     base + quantile_l2_antimonotone(E1, E0), "ding")


def sharp_bounds_late(pop: FinitePopulation, covariates: bool = True) -> BoundPair:
    """Bounds on the variance of the complier-adjusted effect y~1 - y~0.

    Weights are the population shares of compliers in each stratum; there is
    no squared-mean correction because the adjusted effect averages to zero.
    """
    check_late_assumptions(pop)
    theta_c = late_truth(pop)
    yt1, yt0 = adjusted_outcomes(pop, theta_c)
    c = pop.compliance == COMPLIER
    w = pop.w[c] if covariates else np.zeros(int(c.sum()), dtype=np.int64)
    K = pop.K if covariates else 1
    weights = np.bincount(w, minlength=K) / pop.N
    lo = hi = 0.0
    for k in range(K):
        m = w == k
        if not m.any():
            continue
        F1, F0 = StepCDF.from_sample(yt1[c][m]), StepCDF.from_sample(yt0[c][m])
        lo += weights[k] * quantile_l2_comonotone(F1, F0)
        hi += weights[k] * quantile_l2_antimonotone(F1, F0)
    return BoundPair(lo, hi, "sharp-late" if covariates else "sharp-late-nocov")


def phi2_tau(pop: FinitePopulation) -> float:
    return pop_variance(pop.tau)


def phi2_tau_tilde(pop: FinitePopulation) -> float:
    yt1, yt0 = adjusted_outcomes(pop)
    return pop_variance(yt1 - yt0)


def _rearranged_y0(y1, y0, groups, which):
    out = y0.copy()
    for idx in groups:
        if idx.size == 0:
            continue
        # units keep y1; y0 values are re-dealt so they rank with (or against) y1
        rank = np.argsort(np.argsort(y1[idx], kind="stable"), kind="stable")
        vals = np.sort(y0[idx])
        if which == "upper":
            vals = vals[::-1]
        out[idx] = vals[rank]
    return out


def extremal_population(pop: FinitePopulation, which: str) -> FinitePopulation:
    """Population with the same strata and stratum marginals attaining a sharp bound.

    Within every stratum y0 is re-paired with y1 comonotonically (``lower``)
    or antimonotonically (``upper``). With compliance types, only compliers'
    y0 values are re-paired, which preserves every type-by-stratum marginal and
    the complier average effect while attaining the LATE bound.
    """
    if which not in ("lower", "upper"):
        raise DomainError(f"which must be 'lower' or 'upper', got {which!r}")
    if pop.compliance is None:
        groups = [np.flatnonzero(pop.w == k) for k in range(pop.K)]
    else:
        check_late_assumptions(pop)
        c = pop.compliance == COMPLIER
        groups = [np.flatnonzero(c & (pop.w == k)) for k in range(pop.K)]
    return pop.replace(y0=_rearranged_y0(pop.y1, pop.y0, groups, which))


def brute_force_extremes(a, b) -> tuple[float, float]:
    """(min, max) over all pairings of (1/m) sum (a_i - b_pi(i))^2, m <= 8."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size:
        raise DomainError("multisets must have equal size")
    if a.size == 0 or a.size > 8:
        raise DomainError("brute force supports sizes 1..8")
    vals = [float(np.sum((a - b[list(p)]) ** 2)) for p in itertools.permutations(range(a.size))]
    return min(vals) / a.size, max(vals) / a.size
