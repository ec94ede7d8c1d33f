"""D2D-assisted multi-antenna coded caching: placement/delivery combinatorics,
complexity bounds, channel drops, D2D/DL mode selection and SCA beamforming."""
from .beamformer import MulticastProblem, ScaSolver, build_constraints, common_rate, sca_solve
from .bounds import bounds_report, mac_max, mac_min, oracle_bounds, q_max, q_min
from .channel import ChannelRealization, calibrated, sample_scenario, scenario_from_positions
from .combinatorics import (
    DomainError,
    MessageLedger,
    ModeAllocation,
    SystemParams,
    build_ledger,
    enumerate_subsets,
    fragment_size,
)
from .scheduler import evaluate, exhaustive_select, heuristic_select

__all__ = [
    "ChannelRealization",
    "DomainError",
    "MessageLedger",
    "ModeAllocation",
    "MulticastProblem",
    "ScaSolver",
    "SystemParams",
    "bounds_report",
    "build_constraints",
    "build_ledger",
    "calibrated",
    "common_rate",
    "enumerate_subsets",
    "evaluate",
    "exhaustive_select",
    "fragment_size",
    "heuristic_select",
    "mac_max",
    "mac_min",
    "oracle_bounds",
    "q_max",
    "q_min",
    "sample_scenario",
    "sca_solve",
    "scenario_from_positions",
]
