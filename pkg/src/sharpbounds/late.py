"""Wald estimation and sharp variance bounds under noncompliance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import NormalDist

import numpy as np

from .bounds import BoundPair
from .errors import DegenerateDesignError, DomainError, WeakInstrumentError
from .estimate import (
    Interval,
    _arm_sizes,
    check_alpha,
    combine_variance,
    diff_in_means,
    interval_from,
    sample_variance,
)
from .population import ObservedSample
from .transport import (
    SignedStepFunction,
    monotone_envelope,
    quantile_l2_antimonotone,
    quantile_l2_comonotone,
)

LATE_FAMILIES = ("naive-zero", "sharp-late-nocov", "sharp-late")
EPS_COMPLIANCE = 0.01
EPS_LAMBDA = 1e-8


def _takeup(s: ObservedSample) -> np.ndarray:
    if s.d is None:
        raise DomainError("the sample has no take-up column")
    return s.d


def _pi_c_counts(s: ObservedSample, mask=None):
    """Integer numerator of the complier share over the denominator n1 * n0."""
    d = _takeup(s)
    n1, n0 = _arm_sizes(s)
    m = np.ones(s.n, dtype=bool) if mask is None else mask
    treated = int(np.sum(d[(s.t == 1) & m]))
    control = int(np.sum(d[(s.t == 0) & m]))
    return treated * n0 - control * n1, n1 * n0


def pi_c_hat(s: ObservedSample, eps: float = EPS_COMPLIANCE, exact: bool = False):
    """Treated-arm take-up rate minus control-arm take-up rate."""
    num, den = _pi_c_counts(s)
    value = Fraction(num, den)
    if value <= eps:
        raise WeakInstrumentError(
            f"estimated complier share {float(value):.4g} is not above {eps}")
    return value if exact else float(value)


def wald(s: ObservedSample, eps: float = EPS_COMPLIANCE) -> float:
    return diff_in_means(s) / pi_c_hat(s, eps)


def adjusted(s: ObservedSample, theta_c_hat: float) -> np.ndarray:
    return s.y - theta_c_hat * _takeup(s)


def arm_variance_adjusted(s: ObservedSample, theta_c_hat: float, t: int) -> float:
    return sample_variance(adjusted(s, theta_c_hat)[s.t == t])


def _lambda_nums(s: ObservedSample, code: int | None):
    d = _takeup(s)
    n1, n0 = _arm_sizes(s)
    m = np.ones(s.n, dtype=bool) if code is None else (s.w == code)
    tr, ct = (s.t == 1) & m, (s.t == 0) & m
    lam1 = int(d[tr].sum()) * n0 - int(d[ct].sum()) * n1
    lam0 = int((1 - d[ct]).sum()) * n1 - int((1 - d[tr]).sum()) * n0
    return lam1, lam0, n1 * n0


def lambda_hats(s: ObservedSample, k, exact: bool = False):
    """(lambda_1k, lambda_0k) for the stratum with label k.

    lambda_1k estimates the share of units that are compliers in stratum k
    from take-up; lambda_0k estimates the same share from non-take-up.
    """
    code = s.labels.index(k) if k in s.labels else None
    if code is None:
        zero = Fraction(0)
        return (zero, zero) if exact else (0.0, 0.0)
    lam1, lam0, den = _lambda_nums(s, code)
    out = Fraction(lam1, den), Fraction(lam0, den)
    return out if exact else (float(out[0]), float(out[1]))


def _f_check(s, yhat, t, code, eps_lambda):
    d = _takeup(s)
    n1, n0 = _arm_sizes(s)
    m = s.w == code
    tr, ct = (s.t == 1) & m, (s.t == 0) & m
    if t == 1:
        # d=1 units: treated count +1/n1, control count -1/n0 (scaled by n1*n0)
        pos, neg = tr & (d == 1), ct & (d == 1)
        wpos, wneg = n0, n1
    else:
        pos, neg = ct & (d == 0), tr & (d == 0)
        wpos, wneg = n1, n0
    total = int(pos.sum()) * wpos - int(neg.sum()) * wneg
    if abs(total) < eps_lambda * n1 * n0:
        raise DegenerateDesignError(
            f"stratum {s.labels[code]!r}: estimated complier weight lambda_{t} is "
            f"{total / (n1 * n0):.3g}; merge sparse strata (--merge-sparse-strata)")
    pts = np.concatenate((yhat[pos], yhat[neg]))
    wts = np.concatenate((np.full(int(pos.sum()), wpos), np.full(int(neg.sum()), -wneg)))
    return SignedStepFunction.from_weights(pts, wts)


def f_check(s: ObservedSample, theta_c_hat: float, t: int, k,
            eps_lambda: float = EPS_LAMBDA) -> SignedStepFunction:
    """Estimated complier CDF of adjusted outcomes in arm t, stratum k.

    A normalized difference of arm-wise sub-ECDFs; it tends to one at +inf but
    need not be monotone.
    """
    if t not in (0, 1):
        raise DomainError(f"arm must be 0 or 1, got {t!r}")
    try:
        code = s.labels.index(k)
    except ValueError:
        raise DomainError(f"unknown stratum key {k!r}") from None
    return _f_check(s, adjusted(s, theta_c_hat), t, code, eps_lambda)


def _late_bounds(s: ObservedSample, theta_c_hat: float, covariates: bool,
                 eps_lambda: float, via: str) -> BoundPair:
    if not covariates:
        s = s.with_strata(np.zeros(s.n, dtype=np.int64), ("all",))
    yhat = adjusted(s, theta_c_hat)
    lo = hi = 0.0
    for code in range(s.K):
        lam1, _, den = _lambda_nums(s, code)
        F1 = _f_check(s, yhat, 1, code, eps_lambda)
        F0 = _f_check(s, yhat, 0, code, eps_lambda)
        if via == "envelope":
            F1, F0 = monotone_envelope(F1), monotone_envelope(F0)
        elif via != "raw":
            raise DomainError(f"unknown quantile route {via!r}")
        weight = lam1 / den
        lo += weight * quantile_l2_comonotone(F1, F0)
        hi += weight * quantile_l2_antimonotone(F1, F0)
    return BoundPair(lo, hi, "sharp-late" if covariates else "sharp-late-nocov", "plugin")


def late_bound_estimates(s: ObservedSample, covariates: bool = True,
                         eps: float = EPS_COMPLIANCE, eps_lambda: float = EPS_LAMBDA,
                         via: str = "envelope") -> BoundPair:
    """Plug-in bounds on the variance of the complier-adjusted effect.

    ``via="raw"`` reads quantiles off the signed estimates directly;
    ``via="envelope"`` uses their running-maximum envelopes. Both agree exactly.
    """
    return _late_bounds(s, wald(s, eps), covariates, eps_lambda, via)


def sigma_c_hat2(s: ObservedSample, lower_family: str = "sharp-late",
                 eps: float = EPS_COMPLIANCE, eps_lambda: float = EPS_LAMBDA) -> float:
    n1, n0 = _arm_sizes(s)
    pc = pi_c_hat(s, eps)
    theta_c = diff_in_means(s) / pc
    if lower_family == "naive-zero":
        lower = 0.0
    elif lower_family in ("sharp-late", "sharp-late-nocov"):
        lower = _late_bounds(s, theta_c, lower_family == "sharp-late", eps_lambda, "envelope").lower
    else:
        raise DomainError(f"unknown lower-bound family {lower_family!r}")
    v1 = arm_variance_adjusted(s, theta_c, 1)
    v0 = arm_variance_adjusted(s, theta_c, 0)
    value, _ = combine_variance(s.N, n1, n0, v1, v0, lower)
    return value / pc**2


def ci_late(s: ObservedSample, alpha: float = 0.05, lower_family: str = "sharp-late",
            eps: float = EPS_COMPLIANCE, eps_lambda: float = EPS_LAMBDA) -> Interval:
    check_alpha(alpha)
    return interval_from(wald(s, eps), sigma_c_hat2(s, lower_family, eps, eps_lambda), s.N, alpha)


def one_sided_p_value(estimate: float, variance: float, N: int) -> float:
    """Normal-approximation p-value for H0: effect = 0 against H1: effect < 0."""
    if variance <= 0:
        return 0.0 if estimate < 0 else 1.0
    return NormalDist().cdf(math.sqrt(N) * estimate / math.sqrt(variance))


@dataclass
class LateAnalysis:
    theta_c_hat: float
    pi_c_hat: float
    phi2_check_arm: tuple
    lambdas: dict
    bound_estimates: dict
    sigma_c_hat2: dict
    sigma_c_hat2_raw: dict
    ci: dict
    p_value_less: dict
    alpha: float
    clamped: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "theta_c_hat": self.theta_c_hat,
            "pi_c_hat": self.pi_c_hat,
            "phi2_check_arm": {"treatment": self.phi2_check_arm[0],
                               "control": self.phi2_check_arm[1]},
            "lambda": {str(k): {"lambda1": v[0], "lambda0": v[1]} for k, v in self.lambdas.items()},
            "bounds": {f: b.as_dict() for f, b in self.bound_estimates.items()},
            "sigma_c_hat2": dict(self.sigma_c_hat2),
            "sigma_c_hat2_raw": dict(self.sigma_c_hat2_raw),
            "ci": {f: {"lower": c.lower, "upper": c.upper, "width": c.width}
                   for f, c in self.ci.items()},
            "p_value_less": dict(self.p_value_less),
            "clamped": dict(self.clamped),
            "alpha": self.alpha,
        }


def analyze_late(s: ObservedSample, alpha: float = 0.05, families=LATE_FAMILIES,
                 eps: float = EPS_COMPLIANCE, eps_lambda: float = EPS_LAMBDA) -> LateAnalysis:
    check_alpha(alpha)
    n1, n0 = _arm_sizes(s)
    pc = pi_c_hat(s, eps)
    theta_c = diff_in_means(s) / pc
    v1 = arm_variance_adjusted(s, theta_c, 1)
    v0 = arm_variance_adjusted(s, theta_c, 0)
    lambdas = {lab: lambda_hats(s, lab) for lab in s.labels}
    bounds, sig, raw, ci, pval, clamped = {}, {}, {}, {}, {}, {}
    for fam in families:
        if fam == "naive-zero":
            lower = 0.0
        elif fam in ("sharp-late", "sharp-late-nocov"):
            bounds[fam] = _late_bounds(s, theta_c, fam == "sharp-late", eps_lambda, "envelope")
            lower = bounds[fam].lower
        else:
            raise DomainError(f"unknown lower-bound family {fam!r}")
        value, r = combine_variance(s.N, n1, n0, v1, v0, lower)
        sig[fam], raw[fam] = value / pc**2, r / pc**2
        clamped[fam] = lower < 0 or r < 0
        ci[fam] = interval_from(theta_c, sig[fam], s.N, alpha)
        pval[fam] = one_sided_p_value(theta_c, sig[fam], s.N)
    return LateAnalysis(theta_c, pc, (v1, v0), lambdas, bounds, sig, raw, ci, pval, alpha, clamped)


def lambda_ok(s: ObservedSample, code: int, eps_lambda: float = EPS_LAMBDA) -> bool:
    """Stratum passes the lambda degeneracy check for both arms."""
    lam1, lam0, den = _lambda_nums(s, code)
    return abs(lam1) >= eps_lambda * den and abs(lam0) >= eps_lambda * den
