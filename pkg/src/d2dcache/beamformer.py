"""Max-min symmetric-rate multicast beamforming over the remaining DL subsets.

Every user k that still needs the messages Omega_k decodes them with a SIC
receiver, so its rate is limited by the 2^|Omega_k| - 1 inequalities of its
MAC region; messages outside Omega_k are interference. The non-convex SINR
couplings are handled by successive convex approximation: each useful-signal
term |h^H w|^2 / beta is replaced by its first-order minorant around the
previous iterate, interference stays exact, and the rate constraints are kept
exact through exponential cones.

Internally channels are scaled by sqrt(P / N0) and beams by 1 / sqrt(P), so
each subproblem sees unit noise and a unit power budget.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import cvxpy as cp
import numpy as np

from .combinatorics import Subset

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITERS = 50


class BeamformerError(RuntimeError):
    """The SCA subproblem could not be solved even after a restart."""


@dataclass(frozen=True)
class MulticastProblem:
    subsets: tuple[Subset, ...]
    channels: Mapping[int, np.ndarray]
    noise_power: float
    power_budget: float
    users: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "subsets", tuple(tuple(sorted(s)) for s in self.subsets))
        object.__setattr__(self, "users", tuple(sorted(self.users)))
        if not self.subsets:
            raise ValueError("multicast problem needs at least one DL subset")
        members = set(self.users)
        for s in self.subsets:
            if not set(s) <= members:
                raise ValueError(f"subset {s} not inside user group {self.users}")
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")

    @classmethod
    def from_realization(cls, real, subsets, noise_power: float, power_budget: float, users=None):
        users = tuple(range(1, real.K + 1)) if users is None else tuple(users)
        return cls(tuple(subsets), {k: real.h(k) for k in users}, noise_power, power_budget, users)

    @property
    def L(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def active_users(self) -> tuple[int, ...]:
        """Users with at least one message left (the others impose nothing)."""
        return tuple(k for k in self.users if any(k in s for s in self.subsets))

    def needed(self, k: int) -> tuple[Subset, ...]:
        return tuple(s for s in self.subsets if k in s)

    def interferers(self, k: int) -> tuple[Subset, ...]:
        return tuple(s for s in self.subsets if k not in s)


@dataclass(frozen=True)
class MacConstraint:
    """r <= (1/|B|) log2(1 + sum of user k's SINRs over B)."""

    user: int
    subsets: tuple[Subset, ...]

    @property
    def coefficient(self) -> float:
        return 1.0 / len(self.subsets)


@dataclass(frozen=True)
class SinrCoupling:
    """gamma[k, T] <= |h_k^H w_T|^2 / (N0 + sum over interferers |h_k^H w_T'|^2)."""

    user: int
    subset: Subset
    interferers: tuple[Subset, ...]


@dataclass
class BeamformerSolution:
    beams: dict[Subset, np.ndarray]
    gammas: dict[tuple[int, Subset], float]
    rate: float
    trace: list[float] = field(default_factory=list)
    status: str = "converged"
    restarts: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.trace) - 1, 0)


def build_constraints(problem: MulticastProblem) -> tuple[list[MacConstraint], list[SinrCoupling]]:
    """All MAC-region inequalities and SINR couplings, users in increasing order."""
    macs, sinrs = [], []
    for k in problem.active_users:
        need = problem.needed(k)
        intf = problem.interferers(k)
        for size in range(len(need), 0, -1):
            for B in combinations(need, size):
                macs.append(MacConstraint(k, B))
        for T in need:
            sinrs.append(SinrCoupling(k, T, intf))
    return macs, sinrs


def _name(s: Subset) -> str:
    return ",".join(map(str, s))


def format_constraints(problem: MulticastProblem) -> str:
    """Canonical one-constraint-per-line text form for regression diffs."""
    macs, sinrs = build_constraints(problem)
    lines = []
    for c in macs:
        terms = " + ".join(f"g[{c.user}|{_name(T)}]" for T in c.subsets)
        lines.append(f"MAC user={c.user} : r <= 1/{len(c.subsets)} log2(1 + {terms})")
    for c in sinrs:
        interf = "".join(f" + |h{c.user}^H w[{_name(T)}]|^2" for T in c.interferers)
        lines.append(f"SINR user={c.user} : g[{c.user}|{_name(c.subset)}] <= |h{c.user}^H w[{_name(c.subset)}]|^2 / (N0{interf})")
    lines.append("POWER : " + " + ".join(f"||w[{_name(T)}]||^2" for T in problem.subsets) + " <= P")
    return "\n".join(lines) + "\n"


def received_powers(problem: MulticastProblem, beams: Mapping[Subset, np.ndarray], k: int) -> dict[Subset, float]:
    h = problem.channels[k]
    return {T: float(abs(np.vdot(h, beams[T])) ** 2) for T in problem.subsets}


def sinrs(problem: MulticastProblem, beams: Mapping[Subset, np.ndarray]) -> dict[tuple[int, Subset], float]:
    """Per-(user, needed subset) SINR with interference from Omega minus Omega_k."""
    out = {}
    for k in problem.active_users:
        rx = received_powers(problem, beams, k)
        den = problem.noise_power + sum(rx[T] for T in problem.interferers(k))
        for T in problem.needed(k):
            out[(k, T)] = rx[T] / den
    return out


def _mac_region_rate(values: Sequence[float]) -> float:
    # for a fixed |B| the binding subset holds the smallest SINRs
    ordered = np.sort(np.asarray(values, dtype=float))
    sizes = np.arange(1, len(ordered) + 1)
    return float(np.min(np.log2(1.0 + np.cumsum(ordered)) / sizes))


def mac_rate(problem: MulticastProblem, beams: Mapping[Subset, np.ndarray], k: int) -> float:
    """Symmetric rate at which user k decodes all of Omega_k (inf if it needs nothing)."""
    need = problem.needed(k)
    if not need:
        return float("inf")
    g = sinrs(problem, beams)
    return _mac_region_rate([g[(k, T)] for T in need])


def common_rate(problem: MulticastProblem, beams: Mapping[Subset, np.ndarray]) -> float:
    g = sinrs(problem, beams)
    return min(_mac_region_rate([g[(k, T)] for T in problem.needed(k)]) for k in problem.active_users)


def initial_beams(problem: MulticastProblem, kind: str = "eig") -> dict[Subset, np.ndarray]:
    """Equal power P/|Omega| per subset, steered at the subset's members.

    ``"mf"`` uses the matched-filter sum of member channels; ``"eig"`` the
    dominant eigenvector of sum h_j h_j^H, which is insensitive to per-user
    channel phases.
    """
    amp = np.sqrt(problem.power_budget / len(problem.subsets))
    beams = {}
    for T in problem.subsets:
        hs = np.array([problem.channels[j] for j in T])
        if kind == "mf":
            v = hs.sum(axis=0)
        elif kind == "eig":
            _, vecs = np.linalg.eigh(hs.T @ hs.conj())
            v = vecs[:, -1]
        else:
            raise ValueError(f"unknown init {kind!r}")
        norm = np.linalg.norm(v)
        if norm == 0:
            v, norm = np.ones(problem.L, dtype=complex), np.sqrt(problem.L)
        beams[T] = amp * v / norm
    return beams


def _real_map(h: np.ndarray) -> np.ndarray:
    """2 x 2L real matrix mapping [Re w; Im w] to [Re h^H w; Im h^H w]."""
    hr, hi = h.real, h.imag
    return np.vstack([np.concatenate([hr, hi]), np.concatenate([-hi, hr])])


class _Model:
    """Parametrized SCA subproblem for one (users, subsets, L) structure."""

    def __init__(self, problem: MulticastProblem):
        L, subsets = problem.L, problem.subsets
        idx = {T: j for j, T in enumerate(subsets)}
        self.U = cp.Variable((2 * L, len(subsets)))
        r = cp.Variable()
        cons = [cp.sum_squares(self.U) <= 1]
        self.H = {}
        self.lin = []  # (user, subset column, interferer columns, c param, d param)
        gamma = {}
        for k in problem.active_users:
            need = [idx[T] for T in problem.needed(k)]
            intf = [idx[T] for T in problem.interferers(k)]
            beta = 1.0
            if intf:
                self.H[k] = cp.Parameter((2, 2 * L))
                beta = cp.Variable()
                cons.append(beta >= 1 + cp.sum_squares(self.H[k] @ self.U[:, intf]))
            for j in need:
                c = cp.Parameter(2 * L)
                d = cp.Parameter(nonneg=True)
                g = cp.Variable(nonneg=True)
                cons.append(g <= c @ self.U[:, j] - d * beta)
                gamma[(k, j)] = g
                self.lin.append((k, j, intf, c, d))
            for size in range(1, len(need) + 1):
                for B in combinations(need, size):
                    cons.append(size * LN2 * r <= cp.log(1 + sum(gamma[(k, j)] for j in B)))
        self.problem = cp.Problem(cp.Maximize(r), cons)

    def solve(self, hs: Mapping[int, np.ndarray], u: np.ndarray) -> np.ndarray | None:
        """One convex step around the (normalized, complex L x M) beams ``u``."""
        ur = np.vstack([u.real, u.imag])
        maps = {k: _real_map(h) for k, h in hs.items()}
        for k, p in self.H.items():
            p.value = maps[k]
        for k, j, intf, c, d in self.lin:
            A = maps[k]
            x = A @ ur[:, j]
            beta = 1.0 + sum(float(np.sum((A @ ur[:, m]) ** 2)) for m in intf)
            c.value = 2.0 * (A.T @ x) / beta
            d.value = float(x @ x) / beta**2
        try:
            with warnings.catch_warnings():
                # inexact steps are screened by the caller's true-rate check
                warnings.simplefilter("ignore", UserWarning)
                self.problem.solve(solver=cp.CLARABEL)
        except cp.error.SolverError as exc:
            log.debug("subproblem solver error: %s", exc)
            return None
        if self.problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or self.U.value is None:
            log.debug("subproblem status %s", self.problem.status)
            return None
        half = u.shape[0]
        return self.U.value[:half] + 1j * self.U.value[half:]


class ScaSolver:
    """Reusable SCA solver; compiled subproblems are cached per structure."""

    def __init__(self, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS, init: str = "eig"):
        self.tol = tol
        self.max_iters = max_iters
        self.init = init
        self._models: dict = {}

    def _model(self, problem: MulticastProblem) -> _Model:
        key = (problem.L, problem.subsets, problem.active_users)
        if key not in self._models:
            self._models[key] = _Model(problem)
        return self._models[key]

    def solve(self, problem: MulticastProblem, init: Mapping[Subset, np.ndarray] | None = None) -> BeamformerSolution:
        if problem.power_budget <= 0:
            raise ValueError("power budget must be positive")
        starts = [init if init is not None else initial_beams(problem, self.init), initial_beams(problem, "mf")]
        for attempt, start in enumerate(starts):
            sol = self._run(problem, start)
            if sol is not None:
                sol.restarts = attempt
                return sol
            log.info("SCA subproblem failed; restarting from matched-filter beams")
        raise BeamformerError(f"SCA failed twice for subsets {problem.subsets} (users {problem.active_users})")

    def _run(self, problem: MulticastProblem, start) -> BeamformerSolution | None:
        scale = np.sqrt(problem.power_budget / problem.noise_power)
        hs = {k: problem.channels[k] * scale for k in problem.active_users}
        norm_problem = MulticastProblem(problem.subsets, hs, 1.0, 1.0, problem.active_users)
        u = np.column_stack([start[T] for T in problem.subsets]) / np.sqrt(problem.power_budget)
        u = u / max(1.0, np.linalg.norm(u))

        def rate_of(v):
            return common_rate(norm_problem, dict(zip(problem.subsets, v.T)))

        model = self._model(problem)
        trace = [rate_of(u)]
        status = "iteration-capped"
        for _ in range(self.max_iters):
            step = model.solve(hs, u)
            if step is None:
                return None
            step = step / max(1.0, np.linalg.norm(step))
            new = rate_of(step)
            if new < trace[-1]:
                # a numerically inexact step never replaces a better iterate
                status = "converged"
                break
            u = step
            trace.append(new)
            if trace[-1] - trace[-2] < self.tol:
                status = "converged"
                break

        beams = {T: u[:, j] * np.sqrt(problem.power_budget) for j, T in enumerate(problem.subsets)}
        return BeamformerSolution(
            beams=beams,
            gammas=sinrs(problem, beams),
            rate=common_rate(problem, beams),
            trace=trace,
            status=status,
        )


def sca_solve(problem: MulticastProblem, init=None, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> BeamformerSolution:
    return ScaSolver(tol, max_iters).solve(problem, init)
