"""Counting MAC conditions and quadratic variables in the DL beam design.

Closed forms give the lower/upper counts after ``i`` subsets have moved to
D2D; :func:`oracle_bounds` enumerates every allocation of ``i`` subsets and
reports the exact extremes so the closed forms can be checked against them.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, islice
from math import comb

import numpy as np

from .combinatorics import DomainError

ORACLE_BUDGET = 10**7


class BudgetExceeded(RuntimeError):
    """Raised when an exhaustive enumeration would exceed its budget."""


@dataclass(frozen=True)
class BoundsIntermediates:
    a: int
    b: int
    m_total: int
    U: int | None = None
    X: int | None = None
    U1: int | None = None
    Y: int | None = None


@dataclass(frozen=True)
class OracleResult:
    mac_min: int
    mac_max: int
    q_min: int
    q_max: int
    n_allocations: int
    # subset indices (into the lexicographic subset list) attaining each extreme
    witnesses: dict


@dataclass(frozen=True)
class BoundsReport:
    t: int
    L: int
    i: int
    mac_min: int
    mac_max: int
    q_min: int
    q_max: int
    intermediates: BoundsIntermediates
    oracle: OracleResult | None = None

    def violations(self) -> list[str]:
        """Bracketing and endpoint checks that fail against the oracle."""
        o = self.oracle
        if o is None:
            return []
        out = []
        checks = [
            ("mac_min <= oracle_mac_min", self.mac_min <= o.mac_min),
            ("oracle_mac_min <= oracle_mac_max", o.mac_min <= o.mac_max),
            ("oracle_mac_max <= mac_max", o.mac_max <= self.mac_max),
            ("q_min <= oracle_q_min", self.q_min <= o.q_min),
            ("oracle_q_min <= oracle_q_max", o.q_min <= o.q_max),
            ("oracle_q_max <= q_max", o.q_max <= self.q_max),
        ]
        if self.i in (0, comb(self.t + self.L, self.t + 1)):
            closed = (self.mac_min, self.mac_max, self.q_min, self.q_max)
            exact = (o.mac_min, o.mac_max, o.q_min, o.q_max)
            checks.append(("endpoint equality", closed == exact))
        out.extend(name for name, ok in checks if not ok)
        return out


def _check_i(t: int, L: int, i: int, lowest: int = 0) -> int:
    if t < 1 or L < 1:
        raise DomainError(f"need t >= 1 and L >= 1 (got t={t}, L={L})")
    top = comb(t + L, t + 1)
    if not lowest <= i <= top:
        raise DomainError(f"i={i} outside [{lowest}, {top}] for t={t}, L={L}")
    return top


def _smallest(pred, start: int = 0) -> int:
    n = start
    while not pred(n):
        n += 1
    return n


def intermediates(t: int, L: int, i: int) -> BoundsIntermediates:
    """a, b for the uniform spread; U, X, U1, Y for the concentrated one."""
    top = _check_i(t, L, i)
    m_total = top - i
    fragments = (t + 1) * m_total
    a = fragments // (t + L)
    b = fragments - a * (t + L)
    if i == 0:
        return BoundsIntermediates(a, b, m_total)
    U = _smallest(lambda u: comb(u - 1, t + 1) < i <= comb(u, t + 1), start=1)
    X = i - comb(U - 1, t + 1)
    U1 = _smallest(lambda u: comb(u - 1, t) < X <= comb(u, t), start=1)
    Y = comb(U1, t) - X
    return BoundsIntermediates(a, b, m_total, U, X, U1, Y)


def _mac(w: int) -> int:
    return 2**w - 1


def _quad(w: int, m_total: int) -> int:
    return w * (m_total - w + 1)


def mac_min(t: int, L: int, i: int) -> int:
    """Fewest MAC conditions: remaining fragments spread evenly over users."""
    p = intermediates(t, L, i)
    return (t + L - p.b) * _mac(p.a) + p.b * _mac(p.a + 1)


def _concentrated_needs(t: int, L: int, p: BoundsIntermediates) -> list[tuple[int, int]]:
    """(multiplicity, messages still needed) for the four user types of the
    concentrated allocation: untouched, fully exchanged, partially exchanged,
    and the one newly added user."""
    full = comb(t + L - 1, t)
    U, X, U1, Y = p.U, p.X, p.U1, p.Y
    return [
        (t + L - U, full),
        (U - (U1 + 1), full - comb(U - 2, t)),
        (U1, full - (comb(U - 2, t) + comb(U1 - 1, t - 1) - Y)),
        (1, full - X),
    ]


def mac_max(t: int, L: int, i: int) -> int:
    """Most MAC conditions: D2D subsets packed onto as few users as possible."""
    _check_i(t, L, i)
    if i == 0:
        return (t + L) * _mac(comb(t + L - 1, t))
    p = intermediates(t, L, i)
    return sum(n * _mac(w) for n, w in _concentrated_needs(t, L, p))


def q_max(t: int, L: int, i: int) -> int:
    p = intermediates(t, L, i)
    return p.b * _quad(p.a + 1, p.m_total) + (t + L - p.b) * _quad(p.a, p.m_total)


def q_min(t: int, L: int, i: int) -> int:
    _check_i(t, L, i)
    if i == 0:
        return q_max(t, L, 0)
    p = intermediates(t, L, i)
    return sum(n * _quad(w, p.m_total) for n, w in _concentrated_needs(t, L, p))


def incidence(t: int, L: int) -> np.ndarray:
    """Boolean (subset x user) membership matrix over users 0..t+L-1."""
    n = t + L
    subsets = list(combinations(range(n), t + 1))
    inc = np.zeros((len(subsets), n), dtype=np.int64)
    for row, s in enumerate(subsets):
        inc[row, list(s)] = 1
    return inc


def mac_count(needed) -> int:
    """Sum over users of 2^W - 1 (a user needing nothing contributes 0)."""
    return int(sum(_mac(int(w)) for w in needed))


def quad_count(needed, m_total: int) -> int:
    return int(sum(_quad(int(w), m_total) for w in needed))


def oracle_bounds(t: int, L: int, i: int, budget: int = ORACLE_BUDGET, chunk: int = 65536) -> OracleResult:
    """Exact extremes of the MAC and quadratic counts over all i-subset allocations."""
    top = _check_i(t, L, i)
    n_alloc = comb(top, i)
    if n_alloc > budget:
        raise BudgetExceeded(f"C({top}, {i}) = {n_alloc} allocations exceeds budget {budget}")
    inc = incidence(t, L)
    full_need = inc.sum(axis=0)
    m_total = top - i
    full = comb(t + L - 1, t)
    # beyond 62 the int64 powers overflow; fall back to Python ints
    pow2 = np.array([2**w for w in range(full + 1)], dtype=np.int64 if full <= 62 else object)

    best = {"mac_min": None, "mac_max": None, "q_min": None, "q_max": None}
    it = combinations(range(top), i)
    while True:
        block = np.fromiter((x for c in islice(it, chunk) for x in c), dtype=np.int64)
        if i == 0:
            rows = np.zeros((1, 0), dtype=np.int64)
        elif block.size == 0:
            break
        else:
            rows = block.reshape(-1, i)
        need = full_need - inc[rows].sum(axis=1)
        if not np.all(need.sum(axis=1) == (t + 1) * m_total):
            raise AssertionError("message conservation violated")
        mac = (pow2[need] - 1).sum(axis=1)
        quad = (need * (m_total - need + 1)).sum(axis=1)
        for key, vals, pick in (
            ("mac_min", mac, np.argmin),
            ("mac_max", mac, np.argmax),
            ("q_min", quad, np.argmin),
            ("q_max", quad, np.argmax),
        ):
            j = int(pick(vals))
            cur = best[key]
            v = int(vals[j])
            better = cur is None or (v < cur[0] if key.endswith("min") else v > cur[0])
            if better:
                best[key] = (v, tuple(int(x) for x in rows[j]))
        if i == 0:
            break
    return OracleResult(
        mac_min=best["mac_min"][0],
        mac_max=best["mac_max"][0],
        q_min=best["q_min"][0],
        q_max=best["q_max"][0],
        n_allocations=n_alloc,
        witnesses={k: v[1] for k, v in best.items()},
    )


def bounds_report(t: int, L: int, i: int, with_oracle: bool = False) -> BoundsReport:
    return BoundsReport(
        t=t,
        L=L,
        i=i,
        mac_min=mac_min(t, L, i),
        mac_max=mac_max(t, L, i),
        q_min=q_min(t, L, i),
        q_max=q_max(t, L, i),
        intermediates=intermediates(t, L, i),
        oracle=oracle_bounds(t, L, i) if with_oracle else None,
    )


def sweep(t: int, L: int, with_oracle: bool = False) -> list[BoundsReport]:
    """Reports for every i from 0 to C(t+L, t+1)."""
    return [bounds_report(t, L, i, with_oracle) for i in range(comb(t + L, t + 1) + 1)]
