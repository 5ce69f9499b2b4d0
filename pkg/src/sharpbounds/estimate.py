"""Difference-in-means inference with plug-in variance bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, NamedTuple

import numpy as np

from .bounds import BoundPair, design_matrix, least_squares
from .errors import DegenerateDesignError, DomainError, RegressionError
from .population import ObservedSample, pop_variance
from .transport import StepCDF, quantile_l2_antimonotone, quantile_l2_comonotone

LOWER_FAMILIES = ("naive-zero", "aronow", "ding", "sharp")

_STD_NORMAL = NormalDist()


class Interval(NamedTuple):
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def normal_upper_quantile(alpha: float) -> float:
    """q with Phi(q) = 1 - alpha."""
    if not (0 < alpha < 1):
        raise DomainError(f"alpha={alpha!r} must lie in (0, 1)")
    if alpha == 0.5:
        return 0.0
    return _STD_NORMAL.inv_cdf(1.0 - alpha)


def check_alpha(alpha: float) -> float:
    if not (0 < alpha < 1):
        raise DomainError(f"alpha={alpha!r} must lie in (0, 1)")
    return alpha / 2


def _arm_sizes(s: ObservedSample) -> tuple[int, int]:
    n1, n0 = s.n1, s.n0
    if n1 < 1 or n0 < 1:
        raise DegenerateDesignError(f"both arms need units (n1={n1}, n0={n0})")
    return n1, n0


def diff_in_means(s: ObservedSample) -> float:
    _arm_sizes(s)
    return float(s.y[s.t == 1].mean() - s.y[s.t == 0].mean())


def sample_variance(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DegenerateDesignError("sample variance needs at least two units")
    return float(np.sum((x - x.mean()) ** 2) / (x.size - 1))


def arm_variance(s: ObservedSample, t: int) -> float:
    """Sample variance of observed outcomes in arm t (divisor n_t - 1)."""
    return sample_variance(s.y[s.t == t])


def _check_strata(s: ObservedSample) -> None:
    for t, name in ((1, "treatment"), (0, "control")):
        present = np.bincount(s.w[s.t == t], minlength=s.K)
        missing = np.flatnonzero(present == 0)
        if missing.size:
            raise DegenerateDesignError(
                f"stratum {s.labels[missing[0]]!r} has no units in the {name} arm; "
                "merge it with a neighbour (--merge-sparse-strata)")


def stratum_estimates(s: ObservedSample):
    """Empirical shares over enrolled units and arm-by-stratum ECDFs.

    Returns ``(pi_hat, cdfs)`` with ``cdfs[(t, k)]`` keyed by arm and stratum code.
    """
    _arm_sizes(s)
    _check_strata(s)
    pi_hat = np.bincount(s.w, minlength=s.K) / s.n
    cdfs = {}
    for t in (1, 0):
        arm = s.t == t
        for k in range(s.K):
            cdfs[(t, k)] = StepCDF.from_sample(s.y[arm & (s.w == k)])
    return pi_hat, cdfs


def bound_estimates_cov(s: ObservedSample) -> BoundPair:
    pi_hat, cdfs = stratum_estimates(s)
    lo = hi = 0.0
    for k in range(s.K):
        F1, F0 = cdfs[(1, k)], cdfs[(0, k)]
        lo += pi_hat[k] * quantile_l2_comonotone(F1, F0)
        hi += pi_hat[k] * quantile_l2_antimonotone(F1, F0)
    theta2 = diff_in_means(s) ** 2
    return BoundPair(lo - theta2, hi - theta2, "sharp", "plugin")


def plugin_aronow(s: ObservedSample) -> BoundPair:
    _arm_sizes(s)
    F1 = StepCDF.from_sample(s.y[s.t == 1])
    F0 = StepCDF.from_sample(s.y[s.t == 0])
    theta2 = diff_in_means(s) ** 2
    return BoundPair(quantile_l2_comonotone(F1, F0) - theta2,
                     quantile_l2_antimonotone(F1, F0) - theta2, "aronow", "plugin")


def plugin_ding(s: ObservedSample) -> BoundPair:
    """Regression-based bounds from per-arm least squares on the observed arms.

    The fitted contrast is evaluated on every enrolled unit; residual ECDFs come
    from each arm's own fit.
    """
    _arm_sizes(s)
    X = design_matrix(s.w, s.K)
    coef, resid = {}, {}
    for t in (1, 0):
        arm = s.t == t
        try:
            coef[t] = least_squares(X[arm], s.y[arm])
        except RegressionError:
            raise RegressionError(
                f"regression in the {'treatment' if t else 'control'} arm is rank deficient; "
                "a stratum is missing from that arm") from None
        resid[t] = s.y[arm] - X[arm] @ coef[t]
    base = pop_variance(X @ (coef[1] - coef[0]))
    E1, E0 = StepCDF.from_sample(resid[1]), StepCDF.from_sample(resid[0])
    return BoundPair(base + quantile_l2_comonotone(E1, E0),
                     base + quantile_l2_antimonotone(E1, E0), "ding", "plugin")


_PLUGINS: dict[str, Callable[[ObservedSample], BoundPair]] = {
    "sharp": bound_estimates_cov,
    "aronow": plugin_aronow,
    "ding": plugin_ding,
}


def lower_bound_estimate(s: ObservedSample, family: str) -> float:
    if family == "naive-zero":
        return 0.0
    try:
        return _PLUGINS[family](s).lower
    except KeyError:
        raise DomainError(f"unknown lower-bound family {family!r}") from None


def combine_variance(N: int, n1: int, n0: int, v1: float, v0: float, lower: float):
    """(N/n1) v1 + (N/n0) v0 - max(lower, 0), clamped at zero.

    Returns ``(clamped, raw)`` where ``raw`` uses the unclamped lower bound.
    """
    base = N / n1 * v1 + N / n0 * v0
    raw = base - lower
    return max(base - max(lower, 0.0), 0.0), raw


def sigma_hat2(s: ObservedSample, lower_family: str = "sharp", lower: float | None = None) -> float:
    n1, n0 = _arm_sizes(s)
    if lower is None:
        lower = lower_bound_estimate(s, lower_family)
    value, _ = combine_variance(s.N, n1, n0, arm_variance(s, 1), arm_variance(s, 0), lower)
    return value


def interval_from(center: float, variance: float, N: int, alpha: float) -> Interval:
    half = normal_upper_quantile(check_alpha(alpha)) * math.sqrt(variance / N)
    return Interval(center - half, center + half)


def confidence_interval(s: ObservedSample, alpha: float = 0.05,
                        lower_family: str = "sharp") -> Interval:
    check_alpha(alpha)
    return interval_from(diff_in_means(s), sigma_hat2(s, lower_family), s.N, alpha)


@dataclass
class AteAnalysis:
    theta_hat: float
    phi2_arm: tuple
    bound_estimates: dict
    sigma_hat2: dict
    sigma_hat2_raw: dict
    ci: dict
    alpha: float
    clamped: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "phi2_arm": {"treatment": self.phi2_arm[0], "control": self.phi2_arm[1]},
            "bounds": {f: b.as_dict() for f, b in self.bound_estimates.items()},
            "sigma_hat2": dict(self.sigma_hat2),
            "sigma_hat2_raw": dict(self.sigma_hat2_raw),
            "ci": {f: {"lower": c.lower, "upper": c.upper, "width": c.width}
                   for f, c in self.ci.items()},
            "clamped": dict(self.clamped),
            "alpha": self.alpha,
        }


def analyze_ate(s: ObservedSample, alpha: float = 0.05,
                families=LOWER_FAMILIES) -> AteAnalysis:
    check_alpha(alpha)
    n1, n0 = _arm_sizes(s)
    theta = diff_in_means(s)
    if {"sharp", "ding"} & set(families):
        _check_strata(s)
    v1, v0 = arm_variance(s, 1), arm_variance(s, 0)
    bounds, sig, raw, ci, clamped = {}, {}, {}, {}, {}
    for fam in families:
        if fam == "naive-zero":
            lower = 0.0
        elif fam in _PLUGINS:
            bounds[fam] = _PLUGINS[fam](s)
            lower = bounds[fam].lower
        else:
            raise DomainError(f"unknown lower-bound family {fam!r}")
        sig[fam], raw[fam] = combine_variance(s.N, n1, n0, v1, v0, lower)
        clamped[fam] = lower < 0 or raw[fam] < 0
        ci[fam] = interval_from(theta, sig[fam], s.N, alpha)
    return AteAnalysis(theta, (v1, v0), bounds, sig, raw, ci, alpha, clamped)


def merge_sparse_strata(s: ObservedSample, is_ok: Callable[[ObservedSample, int], bool] | None = None
                        ) -> ObservedSample:
    """Merge failing strata into their order-adjacent neighbour until all pass.

    The default check requires every stratum to have units in both arms.
    Merged labels are joined with ``+``.
    """
    if is_ok is None:
        def is_ok(smp, k):
            m = smp.w == k
            return bool(np.any(m & (smp.t == 1)) and np.any(m & (smp.t == 0)))
    while True:
        bad = next((k for k in range(s.K) if not is_ok(s, k)), None)
        if bad is None:
            return s
        if s.K == 1:
            raise DegenerateDesignError("cannot merge strata further: a single stratum remains")
        target = bad - 1 if bad > 0 else 1
        lo, hi = sorted((bad, target))
        labels = list(s.labels)
        labels[lo] = f"{labels[lo]}+{labels[hi]}"
        del labels[hi]
        w = np.where(s.w == hi, lo, s.w)
        w = np.where(w > hi, w - 1, w)
        s = s.with_strata(w, tuple(labels))
