"""D2D/DL mode selection and end-to-end delivery-time accounting.

A mode allocation moves whole (t+1)-subsets to the D2D sub-phase. D2D slots
run one after another (TDMA); inside a slot every member multicasts its XOR of
sub-packets (size C(K,t,L)/t) to the other members. The remaining subsets are
multicast by the BS with the beamformer module, and the per-user rate is
F / (T_D2D + T_DL).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .beamformer import BeamformerSolution, MulticastProblem, ScaSolver
from .bounds import BudgetExceeded
from .channel import ChannelRealization
from .combinatorics import (
    ModeAllocation,
    MessageLedger,
    Subset,
    SystemParams,
    build_ledger,
    enumerate_subsets,
    fragment_size,
    serving_groups,
)

EXHAUSTIVE_BUDGET = 2**16
STRATEGIES = ("dl-only", "d2d-only", "heuristic", "exhaustive")


class InfeasibleTimeError(ValueError):
    """A D2D link has zero rate, so its transmission never finishes."""


class ExhaustedError(ValueError):
    """No candidate subsets are left to choose from."""


@dataclass
class DeliveryOutcome:
    allocation: ModeAllocation
    t_d2d: float
    t_dl: float
    per_user_rate: float
    dl_symmetric_rate: float | None
    solution: BeamformerSolution | None = None
    d2d_rates: dict = field(default_factory=dict)

    @property
    def total_time(self) -> float:
        return self.t_d2d + self.t_dl


@dataclass(frozen=True)
class HeuristicStep:
    i: int
    subset: Subset
    approx_d2d_time: float
    approx_dl_time: float
    satisfied: bool


@dataclass
class HeuristicTrace:
    steps: list[HeuristicStep] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)


def default_group(params: SystemParams) -> tuple[int, ...]:
    if params.K > params.t + params.L:
        raise ValueError("K > t+L: pass an explicit serving group or use deliver_all_groups")
    return tuple(range(1, params.K + 1))


def _gain_matrix(gains) -> np.ndarray:
    return gains.d2d_gain if isinstance(gains, ChannelRealization) else np.asarray(gains, dtype=float)


def d2d_rate(tx: int, receivers: Iterable[int], gains, p_d: float, n0: float) -> float:
    """Multicast rate from ``tx``: the weakest receiver limits it."""
    g = _gain_matrix(gains)
    receivers = list(receivers)
    if not receivers:
        raise ValueError("empty receiver set")
    if tx in receivers:
        raise ValueError("transmitter cannot be its own receiver")
    return float(min(np.log2(1.0 + p_d * g[tx - 1, k - 1] / n0) for k in receivers))


def subset_d2d_rates(subset: Subset, gains, params: SystemParams) -> dict[int, float]:
    """Rate of each member's transmission to the rest of ``subset``."""
    return {
        k: d2d_rate(k, [j for j in subset if j != k], gains, params.device_power, params.noise_power)
        for k in subset
    }


def _chunk(params: SystemParams) -> float:
    return fragment_size(params.K, params.t, params.L, params.file_size_bits)


def d2d_time(allocation: ModeAllocation, gains, params: SystemParams) -> float:
    """Total sequential D2D time; each transmission carries C(K,t,L)/t bits."""
    packet = _chunk(params) / params.t
    total = 0.0
    for T in allocation.d2d_subsets:
        for k, rate in subset_d2d_rates(T, gains, params).items():
            if rate <= 0:
                raise InfeasibleTimeError(f"user {k} in D2D subset {T} has zero rate")
            total += packet / rate
    return total


def approx_subset_rate(subset: Subset, gains, params: SystemParams) -> float:
    """Average over members of their weakest-receiver D2D rate."""
    return float(np.mean(list(subset_d2d_rates(subset, gains, params).values())))


def approx_d2d(candidates: Sequence[Subset], gains, params: SystemParams) -> tuple[Subset, float]:
    """Highest approximate-rate candidate and its per-transmission D2D time."""
    if not candidates:
        raise ExhaustedError("no unallocated subsets left")
    best, best_rate = None, -np.inf
    for T in sorted(tuple(sorted(c)) for c in candidates):
        rate = approx_subset_rate(T, gains, params)
        if rate > best_rate:
            best, best_rate = T, rate
    time = _chunk(params) / params.t / best_rate if best_rate > 0 else np.inf
    return best, time


def approx_user_dl_rate(k: int, ledger: MessageLedger, real: ChannelRealization, params: SystemParams) -> float:
    """Equal-power, interference-free matched-filter estimate of user k's MAC rate."""
    need = ledger.needed_by(k)
    snr = params.bs_power / (len(ledger.remaining) * params.noise_power)
    quality = np.array([np.mean([np.linalg.norm(real.h(j)) ** 2 for j in T]) for T in need])
    # for each |B| the smallest qualities bind
    sums = np.cumsum(np.sort(quality))
    sizes = np.arange(1, len(need) + 1)
    return float(np.min(np.log2(1.0 + snr * sums) / sizes))


def approx_dl(ledger: MessageLedger, real: ChannelRealization, params: SystemParams) -> float:
    """Coarse DL time C(K,t,L) / min_k R_k; zero when nothing is left for the BS."""
    users = [k for k in ledger.needed if ledger.needed[k] > 0]
    if ledger.m_total == 0 or not users:
        return 0.0
    rate = min(approx_user_dl_rate(k, ledger, real, params) for k in users)
    return _chunk(params) / rate if rate > 0 else np.inf


def heuristic_select(real: ChannelRealization, params: SystemParams, group=None) -> tuple[ModeAllocation, HeuristicTrace]:
    """Greedy D2D mode selection.

    At iteration i the best unallocated subset (by approximate D2D rate) is
    accepted while the approximate DL time per remaining fragment, with the
    i-1 earlier choices already removed, is at least its D2D time.
    """
    group = default_group(params) if group is None else tuple(sorted(group))
    t, L = params.t, params.L
    subsets = enumerate_subsets(group, t + 1)
    n_fragments = (t + 1) * len(subsets)
    chosen: list[Subset] = []
    trace = HeuristicTrace()
    for i in range(1, len(subsets) + 1):
        candidates = [s for s in subsets if s not in chosen]
        best, t_d2d = approx_d2d(candidates, real, params)
        ledger = build_ledger(t, L, ModeAllocation(tuple(chosen), group))
        t_dl = approx_dl(ledger, real, params)
        ok = t_dl / (n_fragments - (t + 1) * (i - 1)) >= t_d2d
        trace.steps.append(HeuristicStep(i, best, t_d2d, t_dl, bool(ok)))
        if not ok:
            break
        chosen.append(best)
    return ModeAllocation(tuple(chosen), group), trace


def evaluate(allocation: ModeAllocation, real: ChannelRealization, params: SystemParams, solver: ScaSolver | None = None) -> DeliveryOutcome:
    """End-to-end delivery for one allocation with the full SCA beam design."""
    solver = ScaSolver() if solver is None else solver
    t_d2d = d2d_time(allocation, real, params)
    ledger = build_ledger(params.t, params.L, allocation)
    chunk = _chunk(params)
    solution, r = None, None
    if ledger.remaining:
        problem = MulticastProblem.from_realization(
            real, ledger.remaining, params.noise_power, params.bs_power, users=allocation.universe
        )
        solution = solver.solve(problem)
        r = solution.rate
        t_dl = chunk / r if r > 0 else np.inf
    else:
        t_dl = 0.0
    return DeliveryOutcome(
        allocation=allocation,
        t_d2d=t_d2d,
        t_dl=t_dl,
        per_user_rate=params.file_size_bits / (t_d2d + t_dl),
        dl_symmetric_rate=r,
        solution=solution,
        d2d_rates={T: subset_d2d_rates(T, real, params) for T in allocation.d2d_subsets},
    )


def all_allocations(group: Sequence[int], t: int, budget: int = EXHAUSTIVE_BUDGET) -> list[ModeAllocation]:
    """Every subset of the (t+1)-subsets, by size then lexicographically."""
    subsets = enumerate_subsets(group, t + 1)
    if 2 ** len(subsets) > budget:
        raise BudgetExceeded(f"2^{len(subsets)} allocations exceeds budget {budget}")
    return [
        ModeAllocation(chosen, tuple(group))
        for size in range(len(subsets) + 1)
        for chosen in combinations(subsets, size)
    ]


def evaluate_all(real, params, solver=None, group=None, budget: int = EXHAUSTIVE_BUDGET) -> list[tuple[ModeAllocation, DeliveryOutcome | None]]:
    """Evaluate every allocation; infeasible D2D allocations map to None."""
    group = default_group(params) if group is None else tuple(sorted(group))
    solver = ScaSolver() if solver is None else solver
    out = []
    for alloc in all_allocations(group, params.t, budget):
        try:
            out.append((alloc, evaluate(alloc, real, params, solver)))
        except InfeasibleTimeError:
            out.append((alloc, None))
    return out


def best_outcome(outcomes: Iterable[tuple[ModeAllocation, DeliveryOutcome | None]]) -> DeliveryOutcome:
    best = None
    for _, outcome in outcomes:
        if outcome is not None and (best is None or outcome.per_user_rate > best.per_user_rate):
            best = outcome
    if best is None:
        raise InfeasibleTimeError("no feasible allocation")
    return best


def exhaustive_select(real, params, solver=None, group=None, budget: int = EXHAUSTIVE_BUDGET) -> DeliveryOutcome:
    """Best allocation over all 2^C(t+L,t+1) choices (first one wins ties)."""
    return best_outcome(evaluate_all(real, params, solver, group, budget))


def strategy_allocation(name: str, real, params, group=None) -> ModeAllocation | None:
    """Allocation for the fixed strategies; None for ``exhaustive``."""
    group = default_group(params) if group is None else tuple(sorted(group))
    if name == "dl-only":
        return ModeAllocation((), group)
    if name == "d2d-only":
        return ModeAllocation(tuple(enumerate_subsets(group, params.t + 1)), group)
    if name == "heuristic":
        return heuristic_select(real, params, group)[0]
    if name == "exhaustive":
        return None
    raise ValueError(f"unknown strategy {name!r}")


def deliver_all_groups(real, params, strategy: str = "heuristic", solver=None) -> float:
    """Per-user rate when t+L < K: the C(K, t+L) serving groups run back to back."""
    solver = ScaSolver() if solver is None else solver
    total = 0.0
    for group in serving_groups(params.K, params.t, params.L):
        alloc = strategy_allocation(strategy, real, params, group)
        if alloc is None:
            outcome = exhaustive_select(real, params, solver, group)
        else:
            outcome = evaluate(alloc, real, params, solver)
        total += outcome.total_time
    return params.file_size_bits / total
