"""Step distribution functions and exact quantile-coupling integrals.

Masses are kept as integer numerators over one positive integer denominator,
so merging the u-breakpoints of two quantile functions is an exact integer
comparison. Outcome values stay floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError

MASS_TOLERANCE = 1e-9


class QuantilePieces(NamedTuple):
    """Piecewise-constant quantile function on (0, 1].

    The value is ``values[j]`` for u in ``(levels[j-1], levels[j]] / denom``.
    """

    levels: np.ndarray
    denom: int
    values: np.ndarray


def _as_support(breakpoints) -> np.ndarray:
    s = np.asarray(breakpoints, dtype=float).reshape(-1)
    if s.size == 0:
        raise DomainError("a step function needs at least one breakpoint")
    if not np.all(np.isfinite(s)):
        raise DomainError("breakpoints must be finite")
    if s.size > 1 and not np.all(np.diff(s) > 0):
        raise DomainError("breakpoints must be strictly increasing")
    return s


def _rationalize(values: Sequence, denom: int | None = None) -> tuple[np.ndarray, int]:
    """Integer numerators over a common denominator for a list of masses."""
    if denom is not None:
        nums = np.asarray(values)
        if nums.dtype.kind not in "iu":
            raise DomainError("numerators must be integers when a denominator is given")
        return nums.astype(np.int64), int(denom)
    fracs = []
    for v in values:
        if isinstance(v, (Fraction, int, np.integer)):
            fracs.append(Fraction(int(v)) if not isinstance(v, Fraction) else v)
        else:
            fracs.append(Fraction(float(v)).limit_denominator(10**9))
    den = 1
    for f in fracs:
        den = den * f.denominator // math.gcd(den, f.denominator)
    nums = np.array([f.numerator * (den // f.denominator) for f in fracs], dtype=np.int64)
    return nums, den


def _to_fraction(u) -> Fraction:
    if isinstance(u, Fraction):
        return u
    if isinstance(u, (int, np.integer)):
        return Fraction(int(u))
    return Fraction(float(u))


@dataclass(frozen=True, eq=False)
class StepCDF:
    """Right-continuous distribution function with finitely many jumps.

    ``cum[j] / denom`` is the value on ``[support[j], support[j+1])``; the
    value left of ``support[0]`` is zero and ``cum[-1] == denom``.
    """

    support: np.ndarray
    cum: np.ndarray
    denom: int

    def __post_init__(self):
        support = _as_support(self.support)
        cum = np.asarray(self.cum, dtype=np.int64).reshape(-1)
        if cum.shape != support.shape:
            raise DomainError("support and cumulative masses differ in length")
        if self.denom <= 0:
            raise DomainError("denominator must be positive")
        if cum[0] < 0 or np.any(np.diff(cum) < 0):
            raise DomainError("cumulative masses must be nonnegative and nondecreasing")
        if cum[-1] != self.denom:
            raise DomainError("total mass must equal one")
        support.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "cum", cum)
        object.__setattr__(self, "denom", int(self.denom))

    @classmethod
    def from_sample(cls, values) -> "StepCDF":
        """Empirical CDF; ties become multiplicity."""
        x = np.asarray(values, dtype=float).reshape(-1)
        if x.size == 0:
            raise DomainError("empirical CDF of an empty sample")
        support, counts = np.unique(x, return_counts=True)
        return cls(support, np.cumsum(counts), int(x.size))

    @classmethod
    def from_counts(cls, values, counts) -> "StepCDF":
        x = np.asarray(values, dtype=float).reshape(-1)
        c = np.asarray(counts, dtype=np.int64).reshape(-1)
        if x.shape != c.shape or np.any(c < 0) or c.sum() == 0:
            raise DomainError("counts must be nonnegative, aligned with values, not all zero")
        order = np.argsort(x, kind="stable")
        x, c = x[order], c[order]
        support, start = np.unique(x, return_index=True)
        summed = np.add.reduceat(c, start)
        return cls(support, np.cumsum(summed), int(c.sum()))

    @classmethod
    def from_cumulative(cls, breakpoints, cum, denom: int | None = None) -> "StepCDF":
        """Build from cumulative values given as floats, Fractions or integer numerators.

        Float inputs whose final value misses one by at most ``MASS_TOLERANCE``
        are renormalized; larger deficits are rejected.
        """
        cum = list(cum)
        if denom is None and cum and not isinstance(cum[-1], (Fraction, int, np.integer)):
            last = float(cum[-1])
            if abs(last - 1.0) > MASS_TOLERANCE:
                raise DomainError(f"total mass {last!r} differs from one")
            cum[-1] = 1
        nums, den = _rationalize(cum, denom)
        return cls(breakpoints, nums, den)

    @property
    def values(self) -> np.ndarray:
        return self.cum / self.denom

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.cum, prepend=0) / self.denom

    def shifted(self, c: float) -> "StepCDF":
        return StepCDF(self.support + c, self.cum, self.denom)

    def __call__(self, x):
        idx = np.searchsorted(self.support, x, side="right")
        vals = np.concatenate(([0], self.cum))[idx] / self.denom
        return vals if np.ndim(x) else float(vals)

    def quantile_pieces(self) -> QuantilePieces:
        prev = np.concatenate(([0], self.cum[:-1]))
        jump = self.cum > prev
        return QuantilePieces(self.cum[jump], self.denom, self.support[jump])

    def same_distribution(self, other: "StepCDF") -> bool:
        """Exact equality of the two distribution functions."""
        a = self.quantile_pieces()
        b = other.quantile_pieces()
        return (
            a.levels.size == b.levels.size
            and np.array_equal(a.values, b.values)
            and all(int(x) * b.denom == int(y) * a.denom for x, y in zip(a.levels, b.levels))
        )

    def __repr__(self):
        return f"StepCDF(support={self.support.tolist()}, cum={self.cum.tolist()}/{self.denom})"


@dataclass(frozen=True, eq=False)
class SignedStepFunction:
    """Right-continuous step function that need not be monotone.

    Values are ``nums[j] / denom`` on ``[breakpoints[j], breakpoints[j+1])``;
    zero to the left of the first breakpoint and one after the last.
    """

    breakpoints: np.ndarray
    nums: np.ndarray
    denom: int

    def __post_init__(self):
        bp = _as_support(self.breakpoints)
        nums = np.asarray(self.nums, dtype=np.int64).reshape(-1)
        if nums.shape != bp.shape:
            raise DomainError("breakpoints and values differ in length")
        if self.denom <= 0:
            raise DomainError("denominator must be positive")
        if nums[-1] != self.denom:
            raise DomainError("a signed step function must end at value one")
        bp.setflags(write=False)
        nums.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "nums", nums)
        object.__setattr__(self, "denom", int(self.denom))

    @classmethod
    def from_values(cls, breakpoints, values, denom: int | None = None) -> "SignedStepFunction":
        vals = list(values)
        if denom is None and vals and not isinstance(vals[-1], (Fraction, int, np.integer)):
            last = float(vals[-1])
            if abs(last - 1.0) > MASS_TOLERANCE:
                raise DomainError(f"limit {last!r} at +infinity differs from one")
            vals[-1] = 1
        nums, den = _rationalize(vals, denom)
        return cls(breakpoints, nums, den)

    @classmethod
    def from_weights(cls, points, weights) -> "SignedStepFunction":
        """Cumulative sum of signed integer weights placed at points.

        The total weight is the normalizer; a negative total flips every sign so
        the stored denominator is positive.
        """
        x = np.asarray(points, dtype=float).reshape(-1)
        wt = np.asarray(weights, dtype=np.int64).reshape(-1)
        total = int(wt.sum())
        if x.size == 0 or total == 0:
            raise DomainError("weights sum to zero; the function cannot be normalized")
        order = np.argsort(x, kind="stable")
        x, wt = x[order], wt[order]
        bp, start = np.unique(x, return_index=True)
        nums = np.cumsum(np.add.reduceat(wt, start))
        if total < 0:
            nums, total = -nums, -total
        return cls(bp, nums, total)

    @property
    def values(self) -> np.ndarray:
        return self.nums / self.denom

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right")
        vals = np.concatenate(([0], self.nums))[idx] / self.denom
        return vals if np.ndim(x) else float(vals)

    def quantile_pieces(self) -> QuantilePieces:
        """Quantile pieces by scanning the definition for each attained level."""
        levels = np.unique(np.clip(self.nums, 1, self.denom))
        levels = levels[levels > 0]
        # first index whose value reaches each level, straight from inf{s : H(s) >= u}
        reach = self.nums[None, :] >= levels[:, None]
        first = np.argmax(reach, axis=1)
        values = self.breakpoints[first]
        keep = np.concatenate((np.diff(values) > 0, [True]))
        return QuantilePieces(levels[keep], self.denom, values[keep])


def generalized_inverse(H: StepCDF | SignedStepFunction, u) -> float:
    """inf{s : H(s) >= u} for u in (0, 1]; +inf when the level is never reached."""
    uf = _to_fraction(u)
    if not (0 < uf <= 1):
        raise DomainError(f"u={u!r} is outside (0, 1]")
    if isinstance(H, StepCDF):
        nums, bp = H.cum, H.support
    elif isinstance(H, SignedStepFunction):
        nums, bp = H.nums, H.breakpoints
    else:
        raise DomainError(f"cannot invert {type(H).__name__}")
    target = uf * H.denom
    for j, v in enumerate(nums):
        if int(v) >= target:
            return float(bp[j])
    return math.inf


def monotone_envelope(F: SignedStepFunction) -> StepCDF:
    """Running supremum clamped to [0, 1]; shares the generalized inverse on (0, 1)."""
    nums = np.clip(np.maximum.accumulate(F.nums), 0, F.denom)
    return StepCDF(F.breakpoints, nums, F.denom)


def _pieces(F) -> QuantilePieces:
    if isinstance(F, QuantilePieces):
        return F
    try:
        return F.quantile_pieces()
    except AttributeError:
        raise DomainError(f"{type(F).__name__} has no quantile function") from None


def _common_scale(a: QuantilePieces, b: QuantilePieces):
    if a.levels[-1] != a.denom or b.levels[-1] != b.denom:
        raise DomainError("quantile function is infinite near u=1 (mass deficit)")
    scale = a.denom * b.denom // math.gcd(a.denom, b.denom)
    if scale > 2**62:
        raise DomainError("mass denominators too large for exact merging")
    return a.levels * (scale // a.denom), b.levels * (scale // b.denom), scale


def quantile_l2_comonotone(F, G) -> float:
    """Integral over (0, 1) of (F^-1(u) - G^-1(u))^2."""
    pf, pg = _pieces(F), _pieces(G)
    a, b, scale = _common_scale(pf, pg)
    cuts = np.union1d(a, b)
    width = np.diff(cuts, prepend=0).astype(float)
    diff = pf.values[np.searchsorted(a, cuts)] - pg.values[np.searchsorted(b, cuts)]
    return float(np.dot(width, diff * diff) / scale)


def quantile_l2_antimonotone(F, G) -> float:
    """Integral over (0, 1) of (F^-1(u) - G^-1(1 - u))^2."""
    pf, pg = _pieces(F), _pieces(G)
    a, b, scale = _common_scale(pf, pg)
    reflected = scale - np.concatenate(([0], b[:-1]))
    cuts = np.union1d(a, reflected)
    prev = np.concatenate(([0], cuts[:-1]))
    # on (prev, cur], 1 - u sweeps [1 - cur, 1 - prev) with no G-breakpoint inside
    diff = pf.values[np.searchsorted(a, cuts)] - pg.values[np.searchsorted(b, scale - prev)]
    width = (cuts - prev).astype(float)
    return float(np.dot(width, diff * diff) / scale)


def representation_check(F: StepCDF, G: StepCDF) -> float:
    """Comonotone integral through the double-integral representation.

    2 * integral over v <= w of (F(v) - G(w))_+ + (G(v) - F(w))_+, summed exactly
    over the grid of merged outcome breakpoints.
    """
    z = np.union1d(F.support, G.support)
    if z.size < 2:
        return 0.0
    fz, gz = F(z[:-1]), G(z[:-1])
    dz = np.diff(z)
    cell = np.maximum(fz[:, None] - gz[None, :], 0) + np.maximum(gz[:, None] - fz[None, :], 0)
    area = np.triu(np.outer(dz, dz), k=1)
    off = float(np.sum(cell * area))
    diag = float(np.sum(np.abs(fz - gz) * dz * dz / 2))
    return 2.0 * (off + diag)


def sorted_pairing_sum(a, b, reverse: bool = False) -> float:
    """(1/m) sum of squared differences of sorted a against sorted (or reversed) b."""
    x = np.sort(np.asarray(a, dtype=float))
    y = np.sort(np.asarray(b, dtype=float))
    if x.shape != y.shape:
        raise DomainError("sorted pairing needs equal sizes")
    if reverse:
        y = y[::-1]
    return float(np.mean((x - y) ** 2))


__all__ = [
    "QuantilePieces",
    "StepCDF",
    "SignedStepFunction",
    "generalized_inverse",
    "monotone_envelope",
    "quantile_l2_comonotone",
    "quantile_l2_antimonotone",
    "representation_check",
    "sorted_pairing_sum",
]
