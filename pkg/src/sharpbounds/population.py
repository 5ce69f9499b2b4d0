"""Finite populations, observed samples and their descriptive functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np

from .errors import AssumptionViolation, DomainError, WeakInstrumentError
from .transport import StepCDF

ALWAYS, COMPLIER, NEVER, DEFIER = "always", "complier", "never", "defier"
COMPLIANCE_TYPES = (ALWAYS, COMPLIER, NEVER, DEFIER)
# (d1, d0) for each compliance type
TAKEUP = {ALWAYS: (1, 1), COMPLIER: (1, 0), NEVER: (0, 0), DEFIER: (0, 1)}


def encode_strata(keys, labels: Sequence[Hashable] | None = None):
    """Map stratum keys to integer codes.

    Codes follow ``labels`` when given, otherwise the order in which keys first
    appear. Returns ``(codes, labels)``.
    """
    keys = list(keys.tolist() if isinstance(keys, np.ndarray) else keys)
    if labels is None:
        index: dict = {}
        for k in keys:
            if k not in index:
                index[k] = len(index)
        labels = tuple(index)
    else:
        labels = tuple(labels)
        index = {k: i for i, k in enumerate(labels)}
        if len(index) != len(labels):
            raise DomainError("stratum labels must be distinct")
    try:
        codes = np.fromiter((index[k] for k in keys), dtype=np.int64, count=len(keys))
    except KeyError as exc:
        raise DomainError(f"stratum key {exc.args[0]!r} is not among the labels") from None
    return codes, labels


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FinitePopulation:
    """Complete potential-outcome table (y1, y0, w) with optional compliance types."""

    y1: np.ndarray
    y0: np.ndarray
    w: np.ndarray
    labels: tuple
    compliance: np.ndarray | None = None

    def __post_init__(self):
        y1 = _frozen(self.y1, float)
        y0 = _frozen(self.y0, float)
        w = _frozen(self.w, np.int64)
        if y1.size == 0:
            raise DomainError("a population needs at least one unit")
        if not (y1.size == y0.size == w.size):
            raise DomainError("y1, y0 and w must have the same length")
        K = len(self.labels)
        if K < 1 or w.min() < 0 or w.max() >= K:
            raise DomainError("stratum codes out of range")
        if np.bincount(w, minlength=K).min() == 0:
            raise DomainError("every stratum key must appear at least once")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.compliance is not None:
            g = _frozen(self.compliance, "<U8")
            if g.size != y1.size:
                raise DomainError("compliance labels must cover every unit")
            bad = set(np.unique(g)) - set(COMPLIANCE_TYPES)
            if bad:
                raise DomainError(f"unknown compliance types {sorted(bad)}")
            object.__setattr__(self, "compliance", g)

    @classmethod
    def build(cls, y1, y0, w=None, compliance=None, labels=None) -> "FinitePopulation":
        if w is None:
            w = [1] * len(y1)
        codes, labels = encode_strata(w, labels)
        return cls(y1, y0, codes, labels, compliance)

    @property
    def N(self) -> int:
        return int(self.y1.size)

    @property
    def K(self) -> int:
        return len(self.labels)

    @property
    def tau(self) -> np.ndarray:
        return self.y1 - self.y0

    def outcomes(self, t: int) -> np.ndarray:
        if t not in (0, 1):
            raise DomainError(f"arm must be 0 or 1, got {t!r}")
        return self.y1 if t == 1 else self.y0

    def takeup(self, t: int) -> np.ndarray:
        """Derived d_t from the compliance types."""
        if self.compliance is None:
            raise DomainError("population has no compliance types")
        col = 0 if t == 1 else 1
        lut = {g: v[col] for g, v in TAKEUP.items()}
        return np.array([lut[g] for g in self.compliance], dtype=np.int64)

    def stratum_index(self, k) -> int:
        try:
            return self.labels.index(k)
        except ValueError:
            raise DomainError(f"unknown stratum key {k!r}") from None

    def replace(self, **changes) -> "FinitePopulation":
        fields = dict(y1=self.y1, y0=self.y0, w=self.w, labels=self.labels,
                      compliance=self.compliance)
        fields.update(changes)
        return FinitePopulation(**fields)


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """Assignment-revealed records (T, y, optional d, w).

    ``population_size`` is the N used in variance formulas; it defaults to the
    number of enrolled units.
    """

    t: np.ndarray
    y: np.ndarray
    w: np.ndarray
    labels: tuple
    d: np.ndarray | None = None
    population_size: int | None = None

    def __post_init__(self):
        t = _frozen(self.t, np.int64)
        y = _frozen(self.y, float)
        w = _frozen(self.w, np.int64)
        if not (t.size == y.size == w.size):
            raise DomainError("T, y and w must have the same length")
        if np.any((t != 0) & (t != 1)):
            raise DomainError("treatment indicators must be 0 or 1")
        if t.size and (w.min() < 0 or w.max() >= len(self.labels)):
            raise DomainError("stratum codes out of range")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.d is not None:
            d = _frozen(self.d, np.int64)
            if d.size != t.size or np.any((d != 0) & (d != 1)):
                raise DomainError("take-up indicators must be 0/1 and cover every record")
            object.__setattr__(self, "d", d)
        if self.population_size is not None and self.population_size < t.size:
            raise DomainError("population size is smaller than the sample")

    @classmethod
    def build(cls, t, y, w=None, d=None, labels=None, population_size=None) -> "ObservedSample":
        if w is None:
            w = [1] * len(t)
        codes, labels = encode_strata(w, labels)
        return cls(t, y, codes, labels, d, population_size)

    @property
    def n(self) -> int:
        return int(self.t.size)

    @property
    def n1(self) -> int:
        return int(self.t.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def N(self) -> int:
        return self.population_size if self.population_size is not None else self.n

    @property
    def K(self) -> int:
        return len(self.labels)

    def arm(self, t: int) -> np.ndarray:
        return self.t == t

    def with_strata(self, w, labels) -> "ObservedSample":
        return ObservedSample(self.t, self.y, w, labels, self.d, self.population_size)

    def __eq__(self, other):
        if not isinstance(other, ObservedSample):
            return NotImplemented
        same_d = (self.d is None and other.d is None) or (
            self.d is not None and other.d is not None and np.array_equal(self.d, other.d))
        return (
            same_d
            and self.labels == other.labels
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.w, other.w)
            and self.N == other.N
        )

    __hash__ = None


def reveal(pop: FinitePopulation, assignment) -> ObservedSample:
    """Observed data under an assignment vector (1 treated, 0 control) over all units."""
    t = np.asarray(assignment, dtype=np.int64)
    if t.size != pop.N:
        raise DomainError("assignment length differs from the population size")
    y = np.where(t == 1, pop.y1, pop.y0)
    d = None
    if pop.compliance is not None:
        d = np.where(t == 1, pop.takeup(1), pop.takeup(0))
    return ObservedSample(t, y, pop.w, pop.labels, d)


@dataclass(frozen=True)
class StratumTable:
    members: dict
    shares: dict  # label -> Fraction

    @property
    def pi(self) -> np.ndarray:
        return np.array([float(v) for v in self.shares.values()])


def stratum_table(pop: FinitePopulation) -> StratumTable:
    counts = np.bincount(pop.w, minlength=pop.K)
    members = {lab: np.flatnonzero(pop.w == k) for k, lab in enumerate(pop.labels)}
    shares = {lab: Fraction(int(counts[k]), pop.N) for k, lab in enumerate(pop.labels)}
    return StratumTable(members, shares)


def mean(a) -> float:
    x = np.asarray(a, dtype=float)
    if x.size == 0:
        raise DomainError("mean of an empty sequence")
    return float(x.mean())


def pop_variance(a) -> float:
    """Variance with divisor N."""
    x = np.asarray(a, dtype=float)
    if x.size == 0:
        raise DomainError("variance of an empty sequence")
    return float(np.mean((x - x.mean()) ** 2))


def ate(pop: FinitePopulation) -> float:
    return mean(pop.y1) - mean(pop.y0)


def late_truth(pop: FinitePopulation) -> float:
    """Average of y1 - y0 over compliers."""
    if pop.compliance is None:
        raise DomainError("population has no compliance types")
    c = pop.compliance == COMPLIER
    if not c.any():
        raise WeakInstrumentError("population has no compliers")
    return float(np.mean(pop.tau[c]))


def check_late_assumptions(pop: FinitePopulation) -> None:
    """Raise unless monotonicity, exclusion and a nonempty complier class hold."""
    if pop.compliance is None:
        raise DomainError("population has no compliance types")
    if np.any(pop.compliance == DEFIER):
        raise AssumptionViolation("population contains defiers (monotonicity fails)")
    noncomplier = pop.compliance != COMPLIER
    if np.any(pop.y1[noncomplier] != pop.y0[noncomplier]):
        raise AssumptionViolation("exclusion restriction fails: y1 != y0 for a non-complier")
    if noncomplier.all():
        raise WeakInstrumentError("population has no compliers")


def adjusted_outcomes(pop: FinitePopulation, theta_c: float | None = None):
    """(y1 - theta_c d1, y0 - theta_c d0) with theta_c the complier average effect."""
    if theta_c is None:
        theta_c = late_truth(pop)
    return pop.y1 - theta_c * pop.takeup(1), pop.y0 - theta_c * pop.takeup(0)


def conditional_cdf(pop: FinitePopulation, t: int, k) -> StepCDF:
    """Empirical CDF of y_t within stratum k."""
    code = pop.stratum_index(k)
    return StepCDF.from_sample(pop.outcomes(t)[pop.w == code])


def stratify_numeric(values, bins: int | None = None, scheme: str = "fixed-edges",
                     edges: Sequence[float] | None = None) -> np.ndarray:
    """Bin numeric values into integer stratum keys 1..bins.

    Intervals are right-closed: with edges (20, 30) the groups are (-inf, 20],
    (20, 30] and (30, inf). Without explicit edges, ``fixed-edges`` splits the
    observed range into equal-width bins and ``quantile`` uses empirical
    quantiles.
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size == 0:
        raise DomainError("no values to stratify")
    if edges is not None:
        e = np.asarray(edges, dtype=float)
        if e.size and np.any(np.diff(e) <= 0):
            raise DomainError("bin edges must be strictly increasing")
        if bins is not None and bins != e.size + 1:
            raise DomainError(f"{e.size} edges define {e.size + 1} bins, not {bins}")
    else:
        if bins is None or bins < 1:
            raise DomainError("bins must be a positive integer")
        probs = np.arange(1, bins) / bins
        if scheme == "quantile":
            e = np.unique(np.quantile(x, probs))
        elif scheme == "fixed-edges":
            e = x.min() + probs * (x.max() - x.min())
        else:
            raise DomainError(f"unknown binning scheme {scheme!r}")
    return np.searchsorted(e, x, side="left") + 1


@dataclass
class DiagnosticsReport:
    """Empirical analogues of the regularity conditions. Advisory only."""

    N: int
    K: int
    fourth_moment_max: float
    share_floor: float
    growth_ratio: float
    pi_c: float | None = None
    min_eigenvalue: float | None = None
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "K": self.K,
            "fourth_moment_max": self.fourth_moment_max,
            "share_floor": self.share_floor,
            "growth_ratio": self.growth_ratio,
            "pi_c": self.pi_c,
            "min_eigenvalue": self.min_eigenvalue,
            "warnings": list(self.warnings),
        }


def _diagnose(y1, y0, w, K, n1, n0, d1=None, d0=None) -> DiagnosticsReport:
    N = int(y1.size)
    counts = np.bincount(w, minlength=K)
    report = DiagnosticsReport(
        N=N,
        K=K,
        fourth_moment_max=float(max(np.mean(y1**4), np.mean(y0**4))),
        share_floor=float(K * counts.min() / N),
        growth_ratio=K * K * math.log(K) / N,
    )
    for t, y in ((1, y1), (0, y0)):
        if pop_variance(y) == 0:
            report.warnings.append(f"outcomes under arm {t} have zero variance")
    if n1 < 2 or n0 < 2:
        report.warnings.append("an arm has fewer than two units; arm variances undefined")
    if d1 is not None:
        report.pi_c = float(np.mean(d1) - np.mean(d0))
        z = np.column_stack((y1, y0, d1, d0)).astype(float)
        z = z - z.mean(axis=0)
        eig = np.linalg.eigvalsh(z.T @ z / N)
        lam = float(eig[0])
        report.min_eigenvalue = 0.0 if abs(lam) < 1e-10 else lam
        if report.min_eigenvalue <= 0:
            report.warnings.append("second-moment matrix of (y1, y0, d1, d0) is singular")
        if report.pi_c <= 0:
            report.warnings.append("no compliers")
    return report


def condition_diagnostics(pop: FinitePopulation, n1: int, n0: int) -> DiagnosticsReport:
    d1 = d0 = None
    if pop.compliance is not None:
        d1, d0 = pop.takeup(1), pop.takeup(0)
    return _diagnose(pop.y1, pop.y0, pop.w, pop.K, n1, n0, d1, d0)


def sample_diagnostics(s: ObservedSample) -> dict:
    """Sample analogues of the population diagnostics (arm-wise moments, shares)."""
    counts = np.bincount(s.w, minlength=s.K)
    out = {
        "n": s.n,
        "n1": s.n1,
        "n0": s.n0,
        "K": s.K,
        "fourth_moment_max": max(
            float(np.mean(s.y[s.arm(t)] ** 4)) if s.arm(t).any() else 0.0 for t in (0, 1)),
        "share_floor": float(s.K * counts.min() / max(s.n, 1)),
        "growth_ratio": s.K * s.K * math.log(s.K) / max(s.n, 1),
    }
    return out
