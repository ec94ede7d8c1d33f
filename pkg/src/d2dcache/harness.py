"""Command-line experiment runner.

Modes:
  bounds-sweep    MAC/quadratic counts for every i (optionally with the oracle)
  rate-vs-radius  Monte Carlo per-user rate for each strategy vs cluster radius
  single-run      one seeded drop, printed in detail
  oracle-check    closed-form bounds against exhaustive enumeration

Exit codes: 0 success, 2 config error, 3 solver budget/resource error,
4 oracle-check failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from math import comb

import numpy as np

from . import bounds
from .beamformer import BeamformerError, ScaSolver, build_constraints
from .bounds import BudgetExceeded
from .channel import GeometryError, sample_scenario, scenario_from_positions, trial_rng
from .combinatorics import (
    DomainError,
    ModeAllocation,
    SystemParams,
    build_ledger,
    coded_message,
    d2d_exchange,
    worst_case_demands,
)
from .scheduler import (
    STRATEGIES,
    InfeasibleTimeError,
    all_allocations,
    evaluate,
    heuristic_select,
    strategy_allocation,
)

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "D2DCACHE_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_ORACLE = 0, 2, 3, 4

BOUNDS_COLUMNS = ["i", "mac_min", "mac_max", "q_min", "q_max",
                  "mac_min_norm", "mac_max_norm", "q_min_norm", "q_max_norm"]
ORACLE_COLUMNS = ["oracle_mac_min", "oracle_mac_max", "oracle_q_min", "oracle_q_max"]
RATE_COLUMNS = ["r", "strategy", "trials", "failures", "mean_rate", "std_err"]
SINGLE_COLUMNS = ["seed", "r", "allocation", "t_d2d", "t_dl", "dl_rate", "per_user_rate",
                  "n_mac", "sca_iterations"]
CHECK_COLUMNS = ["t", "L", "i", "mac_min", "oracle_mac_min", "oracle_mac_max", "mac_max",
                 "q_min", "oracle_q_min", "oracle_q_max", "q_max", "status", "violations"]

# Pinned geometries: a close group and one far user, all inside the 100 m cell.
FIXTURES = {
    "example1": dict(K=3, L=2, t=1, positions=[(-2.5, 40.0), (2.5, 40.0), (0.0, -50.0)], d2d=[(1, 2)]),
    "example2": dict(K=4, L=2, t=2, positions=[(-2.5, 40.0), (2.5, 40.0), (0.0, 44.33), (0.0, -50.0)], d2d=[(1, 2, 3)]),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    K: int = 3
    L: int = 2
    t: int = 1
    file_size_bits: float = 1.0
    noise_power: float = 1.0
    bs_power: float = 1e6
    device_power: float = 100.0
    pathloss_dl: float = 3.0
    pathloss_d2d: float = 2.0
    cell_radius_m: float = 100.0
    min_distance_m: float = 1.0
    r: float = 5.0
    seed: int = 0
    trials: int = 200
    radii: list[float] = field(default_factory=lambda: [1.0, 5.0, 10.0, 20.0])
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    oracle: bool = False
    max_tl: int = 6
    workers: int = 0
    fixture: str | None = None
    d2d: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trial count must be at least 1")
        if any(not 0 < r <= self.cell_radius_m for r in self.radii):
            raise ConfigError("radius grid must lie in (0, R]")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ConfigError(f"unknown strategies {sorted(unknown)}")

    def params(self, r: float | None = None) -> SystemParams:
        return SystemParams(
            K=self.K, L=self.L, t=self.t,
            file_size_bits=self.file_size_bits, noise_power=self.noise_power,
            bs_power=self.bs_power, device_power=self.device_power,
            pathloss_dl=self.pathloss_dl, pathloss_d2d=self.pathloss_d2d,
            cell_radius_m=self.cell_radius_m,
            cluster_radius_m=self.r if r is None else r,
            min_distance_m=self.min_distance_m,
        )


def fmt(value) -> str:
    """CSV cell: integers verbatim, floats with 9 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def to_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


# bounds ---------------------------------------------------------------------

def bounds_rows(t: int, L: int, with_oracle: bool = False) -> list[dict]:
    reports = bounds.sweep(t, L, with_oracle)
    base = reports[0]
    rows = []
    for rep in reports:
        row = {"i": rep.i, "mac_min": rep.mac_min, "mac_max": rep.mac_max, "q_min": rep.q_min, "q_max": rep.q_max}
        for key in ("mac_min", "mac_max", "q_min", "q_max"):
            row[f"{key}_norm"] = row[key] / getattr(base, key)
        if rep.oracle is not None:
            row.update(oracle_mac_min=rep.oracle.mac_min, oracle_mac_max=rep.oracle.mac_max,
                       oracle_q_min=rep.oracle.q_min, oracle_q_max=rep.oracle.q_max)
        rows.append(row)
    return rows


def run_bounds_sweep(config: ExperimentConfig) -> str:
    rows = bounds_rows(config.t, config.L, config.oracle)
    return to_csv(BOUNDS_COLUMNS + (ORACLE_COLUMNS if config.oracle else []), rows)


def run_oracle_check(config: ExperimentConfig, pairs=None) -> tuple[str, list[dict]]:
    """Pass/fail table over every (t, L) with t+L <= max_tl; returns (csv, failures)."""
    if config.max_tl > 6 and pairs is None:
        log.warning("max-tl %d is above the exhaustive guard of 6", config.max_tl)
    if pairs is None:
        pairs = [(t, n - t) for n in range(2, config.max_tl + 1) for t in range(1, n)]
    rows, failures = [], []
    for t, L in pairs:
        for i in range(comb(t + L, t + 1) + 1):
            rep = bounds.bounds_report(t, L, i, with_oracle=True)
            bad = rep.violations()
            o = rep.oracle
            row = dict(t=t, L=L, i=i, mac_min=rep.mac_min, oracle_mac_min=o.mac_min,
                       oracle_mac_max=o.mac_max, mac_max=rep.mac_max, q_min=rep.q_min,
                       oracle_q_min=o.q_min, oracle_q_max=o.q_max, q_max=rep.q_max,
                       status="pass" if not bad else "FAIL", violations=";".join(bad))
            rows.append(row)
            if bad:
                failures.append(dict(row, witnesses=o.witnesses))
    return to_csv(CHECK_COLUMNS, rows), failures


# Monte Carlo ----------------------------------------------------------------

_worker_solver: ScaSolver | None = None


def _solver() -> ScaSolver:
    global _worker_solver
    if _worker_solver is None:
        _worker_solver = ScaSolver()
    return _worker_solver


def trial_rates(params: SystemParams, master_seed: int, trial: int, strategies) -> dict[str, float]:
    """Per-user rate of each strategy on one drop; NaN marks a solver failure.

    Evaluations are shared between strategies, so the exhaustive result is
    never below any other strategy evaluated on the same drop.
    """
    real = sample_scenario(params, trial_rng(master_seed, trial))
    solver = _solver()
    cache: dict = {}

    def rate(alloc: ModeAllocation) -> float:
        if alloc.key not in cache:
            try:
                cache[alloc.key] = evaluate(alloc, real, params, solver).per_user_rate
            except InfeasibleTimeError:
                cache[alloc.key] = 0.0
            except BeamformerError as exc:
                log.warning("trial %d: %s", trial, exc)
                cache[alloc.key] = float("nan")
        return cache[alloc.key]

    out = {}
    for name in strategies:
        if name == "exhaustive":
            vals = [rate(a) for a in all_allocations(tuple(range(1, params.K + 1)), params.t)]
            out[name] = float("nan") if np.any(np.isnan(vals)) else max(vals)
        else:
            out[name] = rate(strategy_allocation(name, real, params))
    return out


def _trial_job(args):
    return trial_rates(*args)


def rate_samples(config: ExperimentConfig) -> dict[float, dict[str, np.ndarray]]:
    """Trial-aligned per-user rates: {r: {strategy: array over trials}}."""
    workers = config.workers or (os.cpu_count() or 1)
    out = {}
    for r in config.radii:
        params = config.params(r)
        jobs = [(params, config.seed, trial, tuple(config.strategies)) for trial in range(config.trials)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
        else:
            results = [_trial_job(job) for job in jobs]
        out[r] = {s: np.array([res[s] for res in results]) for s in config.strategies}
    return out


def summarize(samples: dict[float, dict[str, np.ndarray]]) -> list[dict]:
    rows = []
    for r, by_strategy in samples.items():
        for name, vals in by_strategy.items():
            ok = vals[~np.isnan(vals)]
            se = float(np.std(ok, ddof=1) / np.sqrt(len(ok))) if len(ok) > 1 else float("nan")
            rows.append(dict(r=float(r), strategy=name, trials=len(vals), failures=int(np.isnan(vals).sum()),
                             mean_rate=float(np.mean(ok)) if len(ok) else float("nan"), std_err=se))
    return rows


def run_rate_vs_radius(config: ExperimentConfig) -> str:
    return to_csv(RATE_COLUMNS, summarize(rate_samples(config)))


# single run -----------------------------------------------------------------

def _parse_allocation(text: str) -> tuple:
    return tuple(tuple(int(x) for x in part.split(",")) for part in text.split(";") if part.strip())


def _set_name(s) -> str:
    return "{" + ",".join(map(str, s)) + "}"


def run_single(config: ExperimentConfig) -> tuple[str, str]:
    """Human-readable report and a one-row CSV for one drop."""
    if config.fixture:
        if config.fixture not in FIXTURES:
            raise ConfigError(f"unknown fixture {config.fixture!r}")
        fx = FIXTURES[config.fixture]
        config = ExperimentConfig(**{**config.__dict__, "K": fx["K"], "L": fx["L"], "t": fx["t"]})
        params = config.params()
        real = scenario_from_positions(params, fx["positions"], config.seed)
        d2d = fx["d2d"] if config.d2d is None else _parse_allocation(config.d2d)
        alloc = ModeAllocation(tuple(d2d), tuple(range(1, params.K + 1)))
        trace = None
    else:
        params = config.params()
        real = sample_scenario(params, config.seed)
        if config.d2d is not None:
            alloc = ModeAllocation(_parse_allocation(config.d2d), tuple(range(1, params.K + 1)))
            trace = None
        else:
            alloc, trace = heuristic_select(real, params)

    outcome = evaluate(alloc, real, params, _solver())
    ledger = build_ledger(params.t, params.L, alloc)
    demands = worst_case_demands(range(1, params.K + 1))
    lines = [f"scenario: K={params.K} L={params.L} t={params.t} r={params.cluster_radius_m:g} m seed={config.seed}"]
    lines.append("positions (m):")
    for k, (x, y) in enumerate(real.positions, start=1):
        lines.append(f"  user {k}: ({x:.2f}, {y:.2f})  |h|^2={np.linalg.norm(real.h(k)) ** 2:.4g}")
    if trace is not None:
        lines.append("heuristic iterations:")
        for st in trace.steps:
            lines.append(f"  i={st.i} subset={_set_name(st.subset)} T_d2d~{st.approx_d2d_time:.6g} "
                         f"T_dl~{st.approx_dl_time:.6g} accepted={st.satisfied}")
    lines.append("D2D allocation: " + (" ".join(_set_name(s) for s in alloc.d2d_subsets) or "none"))
    for s in alloc.d2d_subsets:
        payloads = d2d_exchange(s, demands)
        for k, rate in outcome.d2d_rates[s].items():
            xor = " + ".join(str(f) for f in payloads[k])
            lines.append(f"  slot {_set_name(s)} user {k} sends {xor}: rate {rate:.6g} bits/s/Hz")
    lines.append(f"DL messages ({ledger.m_total}):")
    for s in ledger.remaining:
        lines.append(f"  X_{_set_name(s)} = " + " + ".join(str(f) for f in coded_message(s, demands)))
    n_mac = 0
    if outcome.solution is not None:
        from .beamformer import MulticastProblem

        problem = MulticastProblem.from_realization(real, ledger.remaining, params.noise_power, params.bs_power)
        macs, sinr = build_constraints(problem)
        n_mac = len(macs)
        per_user = {k: sum(1 for c in macs if c.user == k) for k in problem.active_users}
        lines.append(f"MAC constraints: {n_mac} total (" + ", ".join(f"user {k}: {n}" for k, n in per_user.items())
                     + f"); SINR couplings: {len(sinr)}")
        lines.append("SCA trace: " + " ".join(f"{v:.6g}" for v in outcome.solution.trace)
                     + f" [{outcome.solution.status}]")
    lines.append(f"T_D2D = {outcome.t_d2d:.9g}")
    lines.append(f"T_DL = {outcome.t_dl:.9g}")
    lines.append(f"R_U = {outcome.per_user_rate:.9g}")
    row = dict(seed=config.seed, r=params.cluster_radius_m,
               allocation=" ".join(_set_name(s) for s in alloc.d2d_subsets) or "none",
               t_d2d=outcome.t_d2d, t_dl=outcome.t_dl,
               dl_rate=outcome.dl_symmetric_rate if outcome.dl_symmetric_rate is not None else 0.0,
               per_user_rate=outcome.per_user_rate, n_mac=n_mac,
               sca_iterations=outcome.solution.iterations if outcome.solution else 0)
    return "\n".join(lines) + "\n", to_csv(SINGLE_COLUMNS, [row])


# CLI ------------------------------------------------------------------------

def read_config_file(path: str) -> dict[str, str]:
    """Plain ``key = value`` lines; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    kind = _FIELD_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        return value.lower() in ("1", "true", "yes", "on")
    if kind == "list[float]":
        return [float(x) for x in value.replace(";", ",").split(",") if x.strip()]
    if kind == "list[str]":
        return [x.strip() for x in value.split(",") if x.strip()]
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2dcache", description="D2D-assisted coded caching experiments")
    parser.add_argument("--config", help="key=value file; command-line flags override it")
    parser.add_argument("--out", help=f"output CSV path (relative paths go under ${OUTPUT_DIR_ENV} if set)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="mode", required=True)

    def scenario_flags(p):
        p.add_argument("--K", type=int)
        p.add_argument("--L", type=int)
        p.add_argument("--t", type=int)
        p.add_argument("--bs-power", type=float)
        p.add_argument("--device-power", type=float)
        p.add_argument("--noise-power", type=float)
        p.add_argument("--pathloss-dl", type=float)
        p.add_argument("--pathloss-d2d", type=float)
        p.add_argument("--cell-radius-m", type=float)
        p.add_argument("--min-distance-m", type=float)

    p = sub.add_parser("bounds-sweep", help="MAC / quadratic count bounds for all i")
    p.add_argument("--t", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--oracle", action="store_true", default=None)

    p = sub.add_parser("rate-vs-radius", help="Monte Carlo per-user rate vs cluster radius")
    scenario_flags(p)
    p.add_argument("--radii", type=str)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--strategies", type=str)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("single-run", help="inspect one seeded drop")
    scenario_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--d2d", help="explicit D2D subsets, e.g. '1,2;1,3'")

    p = sub.add_parser("oracle-check", help="closed-form bounds vs exhaustive enumeration")
    p.add_argument("--max-tl", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--L", type=int)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "verbose", "mode") or value is None:
            continue
        values[key] = value
    values = {k: _coerce(k, v) for k, v in values.items()}
    values.pop("mode", None)
    return ExperimentConfig(mode=args.mode, **values)


def _output_path(out: str | None) -> str | None:
    if out is None:
        return None
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(out):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, out)
    return out


def _emit(text: str, out: str | None):
    path = _output_path(out)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = config_from_args(args)
        if config.mode == "bounds-sweep":
            _emit(run_bounds_sweep(config), config.out)
        elif config.mode == "rate-vs-radius":
            _emit(run_rate_vs_radius(config), config.out)
        elif config.mode == "single-run":
            report, table = run_single(config)
            sys.stdout.write(report)
            if config.out is None:
                sys.stdout.write("\n")
            _emit(table, config.out)
        elif config.mode == "oracle-check":
            pairs = [(config.t, config.L)] if args.t is not None and args.L is not None else None
            table, failures = run_oracle_check(config, pairs)
            _emit(table, config.out)
            for f in failures:
                # subset indices (lexicographic order) of the allocations behind each failed check
                alloc = {k: v for k, v in f["witnesses"].items() if k in f["violations"]}
                print(f"oracle-check FAIL t={f['t']} L={f['L']} i={f['i']}: {f['violations']} "
                      f"allocation {alloc}", file=sys.stderr)
            if failures:
                return EXIT_ORACLE
    except (ConfigError, DomainError, GeometryError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BudgetExceeded, BeamformerError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
