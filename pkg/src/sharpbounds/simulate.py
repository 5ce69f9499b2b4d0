"""Seeded generators, complete randomization and the Monte Carlo study engine.

Random streams: a study with master seed ``s`` draws its population from
``SeedSequence(s, spawn_key=(0,))`` and replication ``r`` from
``SeedSequence(s, spawn_key=(1, r))``, each driving a PCG64 generator. Normal
variates are inverse-CDF transforms of open-interval uniforms.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri

from .bounds import (
    aronow_bounds,
    ding_bounds,
    extremal_population,
    phi2_tau,
    phi2_tau_tilde,
    sharp_bounds_cov,
    sharp_bounds_late,
)
from .errors import DegenerateDesignError, DomainError, InputError, WeakInstrumentError
from .estimate import LOWER_FAMILIES, analyze_ate
from .late import LATE_FAMILIES, analyze_late
from .population import ALWAYS, COMPLIER, NEVER, FinitePopulation, ate, late_truth, reveal

STRATUM_MEANS = np.array([3.0, 0.0, -2.0, 4.0])
STRATUM_SPREAD = np.array([2.0, 1.5, 5.0, 4.0])
TYPE_PROBS = {ALWAYS: 0.2, COMPLIER: 0.7, NEVER: 0.1}
W_GIVEN_TYPE = {
    ALWAYS: (0.15, 0.2, 0.3, 0.35),
    COMPLIER: (0.25, 0.25, 0.25, 0.25),
    NEVER: (0.35, 0.3, 0.2, 0.15),
}
SCENARIOS = ("perfect", "noncompliance")


def population_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, rep))))


def _uniform_open(rng: np.random.Generator, size: int) -> np.ndarray:
    return (rng.integers(0, 2**53, size=size) + 0.5) * 2.0**-53


def _normal(rng: np.random.Generator, size: int) -> np.ndarray:
    return ndtri(_uniform_open(rng, size))


def _categorical(rng: np.random.Generator, probs, size: int) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, _uniform_open(rng, size), side="right")


def _spreads(spread: str):
    """Standard deviations of Y1 | W and of the noise, per stratum.

    ``sd`` treats the listed spread parameters as standard deviations (this
    reproduces the published population values); ``variance`` treats them as
    variances.
    """
    if spread == "sd":
        return STRATUM_SPREAD, 6.0 - STRATUM_SPREAD
    if spread == "variance":
        return np.sqrt(STRATUM_SPREAD), np.sqrt(6.0 - STRATUM_SPREAD)
    raise DomainError(f"spread must be 'sd' or 'variance', got {spread!r}")


def complete_randomization(N: int, n1: int, rng: np.random.Generator) -> np.ndarray:
    """0/1 assignment vector, uniform over all treated sets of size n1."""
    if not (0 <= n1 <= N):
        raise DomainError(f"cannot treat {n1} of {N} units")
    t = np.zeros(N, dtype=np.int64)
    t[rng.choice(N, size=n1, replace=False)] = 1
    return t


def dgp_perfect(N: int, rng: np.random.Generator, spread: str = "sd") -> FinitePopulation:
    if N < 1:
        raise DomainError("N must be positive")
    s1, sv = _spreads(spread)
    k = _categorical(rng, np.full(4, 0.25), N)
    y1 = STRATUM_MEANS[k] + s1[k] * _normal(rng, N)
    y0 = 0.3 * y1 + sv[k] * _normal(rng, N)
    return FinitePopulation(y1, y0, k, (1, 2, 3, 4))


def dgp_noncompliance(N: int, rng: np.random.Generator, spread: str = "sd") -> FinitePopulation:
    if N < 1:
        raise DomainError("N must be positive")
    s1, sv = _spreads(spread)
    types = list(TYPE_PROBS)
    g = np.array(types)[_categorical(rng, list(TYPE_PROBS.values()), N)]
    k = np.empty(N, dtype=np.int64)
    for h in types:
        m = g == h
        k[m] = _categorical(rng, W_GIVEN_TYPE[h], int(m.sum()))
    y1 = STRATUM_MEANS[k] + s1[k] * _normal(rng, N)
    c = g == COMPLIER
    y0 = y1.copy()
    y0[c] = 0.3 * (k[c] + 1) + sv[k[c]] * _normal(rng, int(c.sum()))
    return FinitePopulation(y1, y0, k, (1, 2, 3, 4), g)


def attain_lower_bound(pop: FinitePopulation) -> FinitePopulation:
    """Re-pair outcomes within strata so the effect variance sits at its sharp lower bound."""
    return extremal_population(pop, "lower")


@dataclass(frozen=True)
class StudyConfig:
    scenario: str = "perfect"
    N: int = 800
    n1: int | None = None
    n0: int | None = None
    reps: int = 1000
    alpha: float = 0.05
    families: tuple = ()
    seed: int = 2021
    attain_lower: bool = False
    spread: str = "sd"
    threads: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InputError(f"scenario must be one of {SCENARIOS}")
        if not isinstance(self.N, int) or self.N < 4:
            raise InputError("N must be an integer >= 4")
        n1 = self.N // 2 if self.n1 is None else self.n1
        n0 = self.N - n1 if self.n0 is None else self.n0
        if n1 < 2 or n0 < 2 or n1 + n0 != self.N:
            raise InputError("n1 and n0 must be >= 2 and sum to N")
        object.__setattr__(self, "n1", n1)
        object.__setattr__(self, "n0", n0)
        if not isinstance(self.reps, int) or self.reps < 1:
            raise InputError("reps must be a positive integer")
        if not (0 < self.alpha < 1):
            raise InputError("alpha must lie in (0, 1)")
        allowed = LOWER_FAMILIES if self.scenario == "perfect" else LATE_FAMILIES
        fams = tuple(self.families) or allowed
        if set(fams) - set(allowed):
            raise InputError(f"families for {self.scenario} must be among {allowed}")
        object.__setattr__(self, "families", fams)
        if self.spread not in ("sd", "variance"):
            raise InputError("spread must be 'sd' or 'variance'")
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise InputError("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise InputError("threads must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown configuration keys {sorted(unknown)}")
        doc = dict(doc)
        if "families" in doc:
            doc["families"] = tuple(doc["families"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InputError(str(exc)) from None


@dataclass
class StudyReport:
    config: StudyConfig
    truth: dict
    estimators: dict
    intervals: dict
    reps_used: int
    excluded: int
    exclusion_reasons: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0
    replications: list | None = None  # per-replication CIs when requested

    def as_dict(self, include_runtime: bool = False) -> dict:
        cfg = asdict(self.config)
        cfg["families"] = list(cfg["families"])
        cfg.pop("threads")
        doc = {
            "config": cfg,
            "seeds": {"population": [self.config.seed, 0],
                      "replication": [self.config.seed, 1, "r"]},
            "truth": self.truth,
            "estimators": self.estimators,
            "intervals": self.intervals,
            "reps_used": self.reps_used,
            "excluded": self.excluded,
            "exclusion_reasons": self.exclusion_reasons,
        }
        if include_runtime:
            doc["runtime_seconds"] = self.runtime_seconds
        return doc

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.as_dict(include_runtime), indent=2, sort_keys=True)


def study_population(config: StudyConfig) -> FinitePopulation:
    rng = population_rng(config.seed)
    gen = dgp_perfect if config.scenario == "perfect" else dgp_noncompliance
    pop = gen(config.N, rng, config.spread)
    return attain_lower_bound(pop) if config.attain_lower else pop


def population_truth(pop: FinitePopulation, scenario: str) -> dict:
    if scenario == "perfect":
        fams = {"sharp": sharp_bounds_cov(pop), "aronow": aronow_bounds(pop),
                "ding": ding_bounds(pop)}
        return {"estimand": ate(pop), "phi2": phi2_tau(pop),
                "bounds": {f: {"lower": b.lower, "upper": b.upper} for f, b in fams.items()}}
    fams = {"sharp-late": sharp_bounds_late(pop, True),
            "sharp-late-nocov": sharp_bounds_late(pop, False)}
    return {"estimand": late_truth(pop), "phi2": phi2_tau_tilde(pop),
            "pi_c": float(np.mean(pop.compliance == COMPLIER)),
            "bounds": {f: {"lower": b.lower, "upper": b.upper} for f, b in fams.items()}}


def _replicate(pop: FinitePopulation, config: StudyConfig, rep: int):
    rng = replication_rng(config.seed, rep)
    sample = reveal(pop, complete_randomization(config.N, config.n1, rng))
    try:
        if config.scenario == "perfect":
            fams = tuple(dict.fromkeys(config.families + ("sharp", "aronow", "ding")))
            res = analyze_ate(sample, config.alpha, fams)
        else:
            fams = tuple(dict.fromkeys(config.families + ("sharp-late", "sharp-late-nocov")))
            res = analyze_late(sample, config.alpha, fams)
    except (DegenerateDesignError, WeakInstrumentError) as exc:
        return type(exc).__name__
    bounds = {f: (b.lower, b.upper) for f, b in res.bound_estimates.items()}
    cis = {f: res.ci[f] for f in config.families}
    return bounds, cis


def run_study(config: StudyConfig, pop: FinitePopulation | None = None,
              keep_replications: bool = False) -> StudyReport:
    """Repeat complete randomization on one fixed population and aggregate.

    RMSE compares each bound estimate with the population bound; AW is the mean
    interval width and CR the share of intervals covering the fixed estimand.
    Replications whose estimators are undefined are excluded and counted.
    """
    start = time.perf_counter()
    pop = study_population(config) if pop is None else pop
    truth = population_truth(pop, config.scenario)
    target = truth["estimand"]

    reps = range(config.reps)
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(lambda r: _replicate(pop, config, r), reps))
    else:
        results = [_replicate(pop, config, r) for r in reps]

    reasons: dict = {}
    sq = {f: [[], []] for f in truth["bounds"]}
    widths = {f: [] for f in config.families}
    covers = {f: [] for f in config.families}
    for res in results:
        if isinstance(res, str):
            reasons[res] = reasons.get(res, 0) + 1
            continue
        bounds, cis = res
        for f, (lo, hi) in bounds.items():
            sq[f][0].append((lo - truth["bounds"][f]["lower"]) ** 2)
            sq[f][1].append((hi - truth["bounds"][f]["upper"]) ** 2)
        for f, ci in cis.items():
            widths[f].append(ci.width)
            covers[f].append(ci.covers(target))
    used = config.reps - sum(reasons.values())
    nan = float("nan")
    estimators = {
        f: {"lower_rmse": math.sqrt(np.mean(v[0])) if v[0] else nan,
            "upper_rmse": math.sqrt(np.mean(v[1])) if v[1] else nan}
        for f, v in sq.items()
    }
    intervals = {
        f: {"aw": float(np.mean(widths[f])) if widths[f] else nan,
            "cr": float(np.mean(covers[f])) if covers[f] else nan}
        for f in config.families
    }
    log = None
    if keep_replications:
        log = [{"rep": r, "excluded": res} if isinstance(res, str) else
               {"rep": r, "ci": {f: (ci.lower, ci.upper) for f, ci in res[1].items()}}
               for r, res in enumerate(results)]
    return StudyReport(config, truth, estimators, intervals, used, config.reps - used, reasons,
                       time.perf_counter() - start, log)


EXAMPLE1_FAMILIES = ("sharp", "aronow", "ding")


def example1_population(j: int) -> FinitePopulation:
    """Binary-outcome population of 600 units indexed by p = j / 200.

    Stratum 1 holds 200 units with 150 control successes and j treated
    successes; stratum 0 holds 400 units with 50 control successes and
    400 - j treated successes.
    """
    if not (0 <= j <= 200):
        raise DomainError("j must lie in 0..200")

    def ones(n, m):
        return np.r_[np.ones(m), np.zeros(n - m)]

    y1 = np.r_[ones(200, j), ones(400, 400 - j)]
    y0 = np.r_[ones(200, 150), ones(400, 50)]
    w = np.r_[np.ones(200, dtype=np.int64), np.zeros(400, dtype=np.int64)]
    return FinitePopulation(y1, y0, w, (0, 1))


def example1_curves() -> list[dict]:
    """Population bounds of every family for p = 1/200, ..., 1."""
    rows = []
    for j in range(1, 201):
        pop = example1_population(j)
        row = {"p": j / 200}
        for name, fn in zip(EXAMPLE1_FAMILIES, (sharp_bounds_cov, aronow_bounds, ding_bounds)):
            b = fn(pop)
            row[f"{name}_lower"], row[f"{name}_upper"] = b.lower, b.upper
        rows.append(row)
    return rows
