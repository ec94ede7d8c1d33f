"""Shared fixtures and brute-force oracles for the test suite."""
from itertools import combinations

import numpy as np

from d2dcache.beamformer import MulticastProblem
from d2dcache.channel import scenario_from_positions
from d2dcache.combinatorics import SystemParams
from d2dcache.harness import FIXTURES


def fixture_scenario(name: str, seed: int, **overrides):
    fx = FIXTURES[name]
    params = SystemParams(K=fx["K"], L=fx["L"], t=fx["t"], **overrides)
    return params, scenario_from_positions(params, fx["positions"], seed)


def example1_problem(seed: int) -> MulticastProblem:
    params, real = fixture_scenario("example1", seed)
    return MulticastProblem.from_realization(real, [(1, 3), (2, 3)], params.noise_power, params.bs_power)


def mac_rate_by_enumeration(sinr_values) -> float:
    """min over every nonempty B of (1/|B|) log2(1 + sum over B)."""
    vals = list(sinr_values)
    return min(
        np.log2(1 + sum(B)) / len(B)
        for size in range(1, len(vals) + 1)
        for B in combinations(vals, size)
    )


def random_search_rate(problem: MulticastProblem, n: int = 10**6, seed: int = 0, chunk: int = 100_000) -> float:
    """Best common rate over beams drawn uniformly on the full-power sphere."""
    rng = np.random.default_rng(seed)
    subsets = problem.subsets
    M, L = len(subsets), problem.L
    best = -np.inf
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        z = rng.standard_normal((m, 2 * M * L))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        w = (z[:, : M * L] + 1j * z[:, M * L :]).reshape(m, M, L) * np.sqrt(problem.power_budget)
        rate = np.full(m, np.inf)
        for k in problem.active_users:
            rx = np.abs(w @ problem.channels[k].conj()) ** 2
            need = [j for j, T in enumerate(subsets) if k in T]
            intf = [j for j, T in enumerate(subsets) if k not in T]
            den = problem.noise_power + rx[:, intf].sum(axis=1)
            g = np.sort(rx[:, need] / den[:, None], axis=1)
            sizes = np.arange(1, len(need) + 1)
            user = np.min(np.log2(1 + np.cumsum(g, axis=1)) / sizes, axis=1)
            rate = np.minimum(rate, user)
        best = max(best, float(rate.max()))
    return best
