"""Random user drops, path-loss Rayleigh channels and transmit-power calibration.

The BS sits at the origin. A cluster disk of radius ``r`` is dropped uniformly
inside the cell (its center within ``R - r`` so no user leaves the cell) and
the K users are uniform i.i.d. inside the cluster. Every link draws
``(1/d)^(n/2) * G`` with G standard circularly-symmetric complex Gaussian.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .combinatorics import SystemParams


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PowerCalibration:
    p_d_over_n0: float
    p_bs_over_n0: float


@dataclass(frozen=True)
class ChannelRealization:
    """One random drop.

    ``bs_channels[k-1]`` is the length-L vector h_k of user k and
    ``d2d_channels[j-1, k-1]`` the scalar channel from user j to user k.
    """

    positions: np.ndarray
    bs_channels: np.ndarray
    d2d_channels: np.ndarray
    seed: object = None
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.bs_channels.shape[0]

    @property
    def L(self) -> int:
        return self.bs_channels.shape[1]

    @property
    def d2d_gain(self) -> np.ndarray:
        """K x K matrix of |h_jk|^2 (diagonal is zero and unused)."""
        return np.abs(self.d2d_channels) ** 2

    def h(self, k: int) -> np.ndarray:
        return self.bs_channels[k - 1]

    def gain(self, j: int, k: int) -> float:
        return float(abs(self.d2d_channels[j - 1, k - 1]) ** 2)

    def with_channels(self, bs_channels=None, d2d_channels=None) -> "ChannelRealization":
        return ChannelRealization(
            self.positions,
            self.bs_channels if bs_channels is None else np.asarray(bs_channels, dtype=complex),
            self.d2d_channels if d2d_channels is None else np.asarray(d2d_channels, dtype=complex),
            self.seed,
            dict(self.meta),
        )


def complex_gaussian(rng: np.random.Generator, size) -> np.ndarray:
    """Zero-mean, unit-variance circularly-symmetric complex normal draws."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one Monte Carlo trial."""
    return np.random.default_rng([master_seed, trial])


def _uniform_in_disk(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    rho = radius * np.sqrt(rng.random(n))
    phi = 2 * np.pi * rng.random(n)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi)])


def sample_positions(params: SystemParams, rng: np.random.Generator) -> np.ndarray:
    R, r = params.cell_radius_m, params.cluster_radius_m
    if not 0 < r <= R:
        raise GeometryError(f"cluster radius {r} must lie in (0, {R}]")
    center = _uniform_in_disk(rng, R - r, 1)[0]
    return center + _uniform_in_disk(rng, r, params.K)


def scenario_from_positions(params: SystemParams, positions, seed=None) -> ChannelRealization:
    """Draw fading for users at fixed ``positions`` (K x 2, meters)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    positions = np.asarray(positions, dtype=float)
    K, L = params.K, params.L
    if positions.shape != (K, 2):
        raise GeometryError(f"expected {K} x 2 positions, got {positions.shape}")
    if np.any(np.hypot(positions[:, 0], positions[:, 1]) > params.cell_radius_m + 1e-9):
        raise GeometryError("user outside the cell")
    d_min = params.min_distance_m

    d_bs = np.maximum(np.hypot(positions[:, 0], positions[:, 1]), d_min)
    bs = (1.0 / d_bs[:, None]) ** (params.pathloss_dl / 2) * complex_gaussian(rng, (K, L))

    diff = positions[:, None, :] - positions[None, :, :]
    d_uu = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), d_min)
    d2d = (1.0 / d_uu) ** (params.pathloss_d2d / 2) * complex_gaussian(rng, (K, K))
    if params.reciprocal_d2d:
        upper = np.triu(d2d, 1)
        d2d = upper + upper.T
    np.fill_diagonal(d2d, 0.0)
    return ChannelRealization(positions, bs, d2d, seed if not isinstance(seed, np.random.Generator) else None)


def sample_scenario(params: SystemParams, seed=None) -> ChannelRealization:
    """Random drop: geometry first, then BS fading, then D2D fading."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    positions = sample_positions(params, rng)
    real = scenario_from_positions(params, positions, rng)
    return ChannelRealization(real.positions, real.bs_channels, real.d2d_channels, seed)


def calibrate_powers(params: SystemParams, d2d_ref_m: float = 10.0, dl_ref_m: float | None = None) -> PowerCalibration:
    """Transmit-power to noise ratios giving 0 dB mean received SNR at the
    reference distances (10 m for D2D, the cell edge for the BS)."""
    dl_ref = params.cell_radius_m if dl_ref_m is None else dl_ref_m
    return PowerCalibration(
        p_d_over_n0=float(d2d_ref_m**params.pathloss_d2d),
        p_bs_over_n0=float(dl_ref**params.pathloss_dl),
    )


def calibrated(params: SystemParams, **kwargs) -> SystemParams:
    """``params`` with both transmit powers set by :func:`calibrate_powers`."""
    cal = calibrate_powers(params, **kwargs)
    return params.replace(
        device_power=cal.p_d_over_n0 * params.noise_power,
        bs_power=cal.p_bs_over_n0 * params.noise_power,
    )


def dump_scenario(real: ChannelRealization) -> str:
    """Plain-text table: user id, x, y, BS channel re/im pairs, D2D re/im pairs."""
    K, L = real.K, real.L
    cols = [np.arange(1, K + 1)[:, None], real.positions]
    for block in (real.bs_channels, real.d2d_channels):
        pairs = np.empty((K, 2 * block.shape[1]))
        pairs[:, 0::2] = block.real
        pairs[:, 1::2] = block.imag
        cols.append(pairs)
    table = np.hstack(cols)
    buf = io.StringIO()
    np.savetxt(buf, table, fmt="%.17g", header=f"K={K} L={L} seed={real.seed}")
    return buf.getvalue()


def load_scenario(text: str) -> ChannelRealization:
    header = text.splitlines()[0].lstrip("# ").split()
    meta = dict(item.split("=", 1) for item in header)
    K, L = int(meta["K"]), int(meta["L"])
    table = np.loadtxt(io.StringIO(text), ndmin=2)
    if table.shape != (K, 3 + 2 * L + 2 * K):
        raise ValueError(f"scenario table has shape {table.shape}, expected {(K, 3 + 2 * L + 2 * K)}")
    bs = table[:, 3 : 3 + 2 * L]
    uu = table[:, 3 + 2 * L :]
    seed = meta.get("seed")
    return ChannelRealization(
        positions=table[:, 1:3].copy(),
        bs_channels=bs[:, 0::2] + 1j * bs[:, 1::2],
        d2d_channels=uu[:, 0::2] + 1j * uu[:, 1::2],
        seed=None if seed == "None" else seed,
    )
