"""Slow, independent reference computations used only by the tests.

Everything here works on Python Fractions or explicit enumeration so it
shares no arithmetic with the package's integer-scaled merging code.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def expand(support, masses, scale):
    """Multiset of `scale` atoms realising a discrete law with rational masses."""
    out = []
    for v, m in zip(support, masses):
        k = Fraction(m) * scale
        assert k.denominator == 1
        out.extend([v] * int(k))
    return sorted(out)


def law_of(F):
    """(support, Fraction masses) of a StepCDF."""
    cum = [Fraction(int(c), F.denom) for c in F.cum]
    masses = [cum[0]] + [b - a for a, b in zip(cum, cum[1:])]
    return list(map(float, F.support)), masses


def coupling_integrals(F, G):
    """(comonotone, antimonotone) squared-L2 quantile distances by atom expansion."""
    sf, mf = law_of(F)
    sg, mg = law_of(G)
    scale = math.lcm(*(m.denominator for m in mf + mg))
    a, b = expand(sf, mf, scale), expand(sg, mg, scale)
    co = sum(Fraction(x) ** 2 - 2 * Fraction(x) * Fraction(y) + Fraction(y) ** 2
             for x, y in zip(a, b))
    anti = sum((Fraction(x) - Fraction(y)) ** 2 for x, y in zip(a, reversed(b)))
    return co / scale, anti / scale


def enumerate_assignments(N, n1):
    for treated in itertools.combinations(range(N), n1):
        t = [0] * N
        for i in treated:
            t[i] = 1
        yield t


def pop_var(xs):
    xs = [Fraction(x) for x in xs]
    m = sum(xs) / len(xs)
    return sum((x - m) ** 2 for x in xs) / len(xs)


def normal_quantile_mp(p):
    """Upper-tail normal quantile to 30 digits via mpmath root finding."""
    import mpmath as mp

    mp.mp.dps = 30
    return float(mp.findroot(lambda q: mp.ncdf(q) - (1 - mp.mpf(p)), 1.0))
