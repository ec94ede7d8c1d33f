"""Cache placement, multicast subsets, XOR messages and the per-user message ledger.

User ids are 1-based labels throughout (user ``k`` is the k-th row of every
channel array). Subsets are sorted tuples of user ids, always produced in
lexicographic order so that every run is reproducible.
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field, replace
from itertools import combinations
from math import comb
from typing import Iterable, Mapping, Sequence

Subset = tuple[int, ...]


class DomainError(ValueError):
    """Raised when combinatorial arguments fall outside their valid range."""


class IncompleteDemandError(ValueError):
    """Raised when a member of a multicast group has no file demand."""


class AllocationError(ValueError):
    """Raised for malformed D2D mode allocations."""


@dataclass(frozen=True)
class SystemParams:
    """Scenario constants shared by every module.

    Powers are linear. The defaults correspond to the calibrated setting
    (0 dB received SNR at 10 m for D2D and at the 100 m cell edge for the BS)
    with unit noise power.
    """

    K: int
    L: int
    t: int
    num_files: int | None = None
    file_size_bits: float = 1.0
    noise_power: float = 1.0
    bs_power: float = 1e6
    device_power: float = 100.0
    pathloss_dl: float = 3.0
    pathloss_d2d: float = 2.0
    cell_radius_m: float = 100.0
    cluster_radius_m: float = 100.0
    min_distance_m: float = 1.0
    reciprocal_d2d: bool = False

    def __post_init__(self):
        if self.K < 2 or self.L < 1 or self.t < 1:
            raise DomainError(f"need K >= 2, L >= 1, t >= 1 (got K={self.K}, L={self.L}, t={self.t})")
        if self.t >= self.K:
            raise DomainError(f"replication factor t={self.t} must be below K={self.K}")
        if self.num_files is not None and self.num_files < self.K:
            raise DomainError("library must hold at least K files")
        for name in ("file_size_bits", "noise_power"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.bs_power < 0 or self.device_power < 0:
            raise DomainError("powers must be nonnegative")
        if not 0 < self.cluster_radius_m <= self.cell_radius_m:
            raise DomainError("cluster radius must lie in (0, cell radius]")

    @property
    def group_size(self) -> int:
        """Number of users served simultaneously, min(t+L, K)."""
        return min(self.t + self.L, self.K)

    @property
    def n_subsets(self) -> int:
        return comb(self.group_size, self.t + 1)

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ModeAllocation:
    """Subsets delivered by D2D, in time-slot order, within a serving group."""

    d2d_subsets: tuple[Subset, ...]
    universe: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "d2d_subsets", tuple(tuple(sorted(s)) for s in self.d2d_subsets))
        object.__setattr__(self, "universe", tuple(sorted(self.universe)))
        if len(set(self.d2d_subsets)) != len(self.d2d_subsets):
            raise AllocationError("D2D subsets must be pairwise distinct")
        members = set(self.universe)
        for s in self.d2d_subsets:
            if not set(s) <= members:
                raise AllocationError(f"subset {s} is not inside the serving group {self.universe}")

    @property
    def i(self) -> int:
        return len(self.d2d_subsets)

    @property
    def key(self) -> tuple[Subset, ...]:
        """Slot-order-independent identity of the allocation."""
        return tuple(sorted(self.d2d_subsets))

    def is_d2d(self, subset: Iterable[int]) -> bool:
        """The indicator I_D2D for one subset."""
        return tuple(sorted(subset)) in self.d2d_subsets


@dataclass(frozen=True)
class MessageLedger:
    """Which multicast messages remain for the downlink and who needs them."""

    m_total: int
    needed: dict[int, int]
    n_fragments: int
    remaining: tuple[Subset, ...] = field(default=())

    def needed_by(self, k: int) -> tuple[Subset, ...]:
        """Remaining subsets containing user ``k`` (the set Omega_k)."""
        return tuple(s for s in self.remaining if k in s)


@dataclass(frozen=True, order=True)
class Fragment:
    """Symbolic subfile W_{file, index}, optionally a D2D sub-packet ``part``."""

    file: str
    index: Subset
    part: int | None = None

    def cached_by(self, k: int) -> bool:
        return k in self.index

    def __str__(self):
        sup = "" if self.part is None else f"^{self.part}"
        return f"{self.file}{sup}_{{{','.join(map(str, self.index))}}}"


def enumerate_subsets(group: Iterable[int], size: int) -> list[Subset]:
    """All ``size``-element subsets of ``group`` in lexicographic order."""
    members = sorted(set(group))
    if size < 0 or size > len(members):
        raise DomainError(f"cannot draw {size} users from a group of {len(members)}")
    return list(combinations(members, size))


def default_file_names(n: int) -> list[str]:
    """A, B, C, ... for small libraries, W1, W2, ... otherwise."""
    if n <= 26:
        return list(string.ascii_uppercase[:n])
    return [f"W{j}" for j in range(1, n + 1)]


def worst_case_demands(users: Iterable[int]) -> dict[int, str]:
    """Distinct demands: user k requests the k-th file."""
    users = sorted(users)
    names = default_file_names(max(users))
    return {k: names[k - 1] for k in users}


def placement(K: int, t: int, file: str) -> list[Fragment]:
    """Split ``file`` into C(K, t) subfiles indexed by t-subsets of [1..K]."""
    if not 1 <= t < K:
        raise DomainError(f"placement needs 1 <= t < K (got t={t}, K={K})")
    return [Fragment(file, tau) for tau in combinations(range(1, K + 1), t)]


def cache_contents(k: int, K: int, t: int, files: Sequence[str]) -> list[Fragment]:
    """Everything user ``k`` stores under the symmetric placement."""
    return [frag for f in files for frag in placement(K, t, f) if frag.cached_by(k)]


def _demand(demands: Mapping[int, str], k: int) -> str:
    try:
        return demands[k]
    except KeyError:
        raise IncompleteDemandError(f"user {k} has no demand") from None


def coded_message(subset: Iterable[int], demands: Mapping[int, str]) -> list[Fragment]:
    """Fragments XOR-ed into the multicast message for ``subset``.

    Member k contributes W_{d_k, subset minus k}; every other member caches it.
    """
    members = tuple(sorted(subset))
    return [Fragment(_demand(demands, k), tuple(j for j in members if j != k)) for k in members]


def d2d_exchange(subset: Iterable[int], demands: Mapping[int, str]) -> dict[int, list[Fragment]]:
    """Per-transmitter XOR payloads when ``subset`` is served by D2D.

    Each missing fragment is held by the other t members and is cut into t
    sub-packets; the member at position p of the fragment index sends part p+1.
    """
    members = tuple(sorted(subset))
    out = {}
    for tx in members:
        payload = []
        for k in members:
            if k == tx:
                continue
            index = tuple(j for j in members if j != k)
            payload.append(Fragment(_demand(demands, k), index, index.index(tx) + 1))
        out[tx] = payload
    return out


def fragment_size(K: int, t: int, L: int, F: float) -> float:
    """Size in bits of one transmitted fragment, F / (C(K,t) C(K-(t+1), L-1))."""
    if not 1 <= t < K or L < 1:
        raise DomainError(f"invalid (K={K}, t={t}, L={L})")
    rest = K - (t + 1)
    if rest > 0 and L - 1 > rest:
        raise DomainError(f"C({rest}, {L - 1}) is zero; need L-1 <= K-(t+1)")
    pack = comb(rest, L - 1) if rest > 0 else 1
    return F / (comb(K, t) * pack)


def build_ledger(t: int, L: int, allocation: ModeAllocation) -> MessageLedger:
    """Count remaining DL messages and per-user needs after the D2D sub-phase."""
    group = allocation.universe
    subsets = enumerate_subsets(group, t + 1)
    for s in allocation.d2d_subsets:
        if len(s) != t + 1:
            raise AllocationError(f"D2D subset {s} does not have t+1={t + 1} members")
    remaining = tuple(s for s in subsets if not allocation.is_d2d(s))
    needed = {k: sum(1 for s in remaining if k in s) for k in group}
    return MessageLedger(
        m_total=len(subsets) - allocation.i,
        needed=needed,
        n_fragments=(t + 1) * len(subsets),
        remaining=remaining,
    )


def serving_groups(K: int, t: int, L: int) -> list[tuple[int, ...]]:
    """Serving groups of size min(t+L, K); C(K, t+L) of them when t+L < K."""
    return enumerate_subsets(range(1, K + 1), min(t + L, K))
