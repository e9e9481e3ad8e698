"""Pilot-based hierarchical channel estimation with controllable quality.

The base station sounds the channel with sector beams from a binary-tree
codebook, descending at each stage into the half whose pilot measurement is
stronger, as a user would feed back. The tree lives in u = sin(angle) space,
the ULA's natural coordinate; after S stages the search lands on one leaf of
a uniform u-grid, whose arcsine is the angle estimate. One extra pilot
through the steering vector at that angle estimates the path gain, the
reconstructed path is cancelled from the measurements, and the search
repeats for the next assumed path.

Estimate quality is set by the pilot-to-noise power ratio (PNR): pilot power
is normalized to 1 and the measurement noise variance is 10^(-pnr_db/10).
The estimator sees the true channel only through these noisy inner products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    HALF_PI,
    ChannelSample,
    PathParams,
    array_response,
    derive_seed,
    reconstruct_h,
    rng_from_seed,
)
from .kernels import search_batch

BEAMS_PER_STAGE = 2  # binary descent; the kernel's tree layout assumes this
_BEAM_GRID_POINTS = 256  # fine-grid resolution used to synthesize one sector beam
_BATCH_CHUNK = 4096


@dataclass(frozen=True)
class EstimatorConfig:
    pnr_db: float
    l_est: int = 3
    grid_size: int = 256

    def validate(self) -> None:
        g = self.grid_size
        if g < 2 or (g & (g - 1)) != 0:
            raise ValueError(f"grid_size must be a power of two >= 2, got {g}")
        if self.l_est < 1:
            raise ValueError("l_est must be >= 1")

    @property
    def stages(self) -> int:
        """Bisection stage count S = log2(grid_size / 2)."""
        return self.grid_size.bit_length() - 2

    def to_dict(self) -> dict:
        return {"pnr_db": self.pnr_db, "l_est": self.l_est, "grid_size": self.grid_size}

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        return cls(**d)


@dataclass(frozen=True)
class ChannelEstimate:
    """Imperfect CSI: estimated vector plus the per-path decomposition.

    paths_est holds (aod_est, gain_est) pairs; h_est is their reconstruction
    under the sparse-model prefactor with L replaced by l_est.
    """

    h_est: np.ndarray
    paths_est: tuple[tuple[float, complex], ...]
    pnr_db: float
    source_seed: int


def angle_grid(grid_size: int) -> np.ndarray:
    """The reachable angle estimates: arcsines of grid_size/2 uniform u-cells.

    grid_size sets the angular resolution: every u in [-1, 1] lies within
    1/grid_size of a cell center, i.e. within pi/grid_size in angle at
    broadside.
    """
    m = grid_size // 2
    u = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
    return np.arcsin(u)


def sounding_beam(lo: float, hi: float, n_t: int) -> np.ndarray:
    """Unit-norm sector beam with near-flat response over [lo, hi] radians.

    Synthesized as the normalized sum of steering vectors on a fine grid
    spaced uniformly in sin(angle) inside the interval. A zero-width interval
    degenerates to the steering vector at that angle.
    """
    if not (-HALF_PI <= lo <= hi <= HALF_PI):
        raise ValueError(f"invalid interval [{lo}, {hi}]")
    if lo == hi:
        return array_response(lo, n_t)
    u_lo, u_hi = math.sin(lo), math.sin(hi)
    u = u_lo + (np.arange(_BEAM_GRID_POINTS) + 0.5) * (u_hi - u_lo) / _BEAM_GRID_POINTS
    k = np.arange(n_t)
    v = (np.exp(1j * np.pi * np.outer(u, k)) / math.sqrt(n_t)).sum(axis=0)
    return v / np.linalg.norm(v)


def pilot_measure(h: np.ndarray, f: np.ndarray, pnr_db: float, rng: np.random.Generator) -> complex:
    """One pilot observation h^H f plus circularly-symmetric noise.

    Noise variance is 10^(-pnr_db/10) with pilot power normalized to 1;
    pnr_db = +inf disables the noise. f must be unit norm.
    """
    f = np.asarray(f)
    if abs(np.linalg.norm(f) - 1.0) > 1e-9:
        raise ValueError("sounding vector must have unit norm")
    sigma = 0.0 if math.isinf(pnr_db) else math.sqrt(10.0 ** (-pnr_db / 10.0) / 2.0)
    n2 = rng.standard_normal(2)
    return complex(np.vdot(h, f) + sigma * (n2[0] + 1j * n2[1]))


def _node_interval_u(stage: int, node: int) -> tuple[float, float]:
    n = 1 << stage
    return (-1.0 + node * 2.0 / n, -1.0 + (node + 1) * 2.0 / n)


_CODEBOOK_CACHE: dict = {}


def _codebook(n_t: int, grid_size: int):
    """(F, cross, aods): beam matrix, cancellation table, grid angles.

    F columns: sector beams in tree order (stage 1 first), then the steering
    vectors of the leaf grid. cross[g, q] = a(aod_g)^H F[:, q].
    """
    key = (n_t, grid_size)
    if key in _CODEBOOK_CACHE:
        return _CODEBOOK_CACHE[key]
    stages = grid_size.bit_length() - 2
    aods = angle_grid(grid_size)
    cols = []
    for s in range(1, stages + 1):
        for node in range(1 << s):
            u_lo, u_hi = _node_interval_u(s, node)
            cols.append(sounding_beam(math.asin(u_lo), math.asin(u_hi), n_t))
    steering = [array_response(a, n_t) for a in aods]
    F = np.array(cols + steering).T if cols or steering else np.zeros((n_t, 0))
    A = np.array(steering)
    cross = A.conj() @ F
    _CODEBOOK_CACHE[key] = (F, cross, aods)
    return F, cross, aods


def _noise_sigma(pnr_db: float) -> float:
    return 0.0 if math.isinf(pnr_db) else math.sqrt(10.0 ** (-pnr_db / 10.0) / 2.0)


def _assemble(idx_row, gain_row, aods, n_t: int, cfg: EstimatorConfig, source_seed: int) -> ChannelEstimate:
    paths = tuple(
        (float(aods[idx_row[p]]), complex(gain_row[p])) for p in range(cfg.l_est)
    )
    path_params = [PathParams(gain=g, aod=a) for a, g in paths]
    return ChannelEstimate(
        h_est=reconstruct_h(path_params, n_t),
        paths_est=paths,
        pnr_db=cfg.pnr_db,
        source_seed=source_seed,
    )


def _estimate_seeded(sample_list, cfg: EstimatorConfig, seeds) -> list[ChannelEstimate]:
    n_t = len(sample_list[0].h)
    F, cross, aods = _codebook(n_t, cfg.grid_size)
    stages = cfg.stages
    n_meas = cfg.l_est * (2 * stages + 1)
    sigma = _noise_sigma(cfg.pnr_db)
    prefactor = math.sqrt(n_t / cfg.l_est)

    out: list[ChannelEstimate] = []
    for start in range(0, len(sample_list), _BATCH_CHUNK):
        chunk = sample_list[start : start + _BATCH_CHUNK]
        H = np.array([s.h for s in chunk])
        y_clean = np.conj(H) @ F
        noise = np.empty((len(chunk), n_meas), dtype=np.complex128)
        for i in range(len(chunk)):
            rng = rng_from_seed(seeds[start + i])
            draws = rng.standard_normal((n_meas, 2))
            noise[i] = sigma * (draws[:, 0] + 1j * draws[:, 1])
        idx, gains = search_batch(y_clean, noise, cross, stages, cfg.l_est, prefactor)
        for i, s in enumerate(chunk):
            out.append(
                _assemble(idx[i], gains[i], aods, n_t, cfg, source_seed=s.seed)
            )
    return out


def estimate_batch(samples, cfg: EstimatorConfig, master_seed: int) -> list[ChannelEstimate]:
    """Estimate every sample's channel, order preserving and deterministic.

    The per-sample pilot noise stream is keyed by the sample's own generation
    seed, derive_seed(master_seed, sample.seed), so the estimate for a given
    sample does not depend on its position in the batch.
    """
    cfg.validate()
    sample_list = list(getattr(samples, "samples", samples))
    if not sample_list:
        return []
    seeds = [derive_seed(master_seed, s.seed) for s in sample_list]
    return _estimate_seeded(sample_list, cfg, seeds)


def estimate_channel(sample: ChannelSample, cfg: EstimatorConfig, seed: int) -> ChannelEstimate:
    """Estimate one channel with an explicit noise seed."""
    cfg.validate()
    return _estimate_seeded([sample], cfg, [seed])[0]


def estimate_channel_reference(sample: ChannelSample, cfg: EstimatorConfig, seed: int) -> ChannelEstimate:
    """Slow reference path: every observation goes through pilot_measure.

    Semantically defines estimate_channel; the table-driven kernel is its
    batched optimization. The true channel is touched only inside
    pilot_measure, and the noise draw order matches the kernel exactly.
    """
    cfg.validate()
    n_t = len(sample.h)
    stages = cfg.stages
    rng = rng_from_seed(seed)
    prefactor = math.sqrt(n_t / cfg.l_est)
    cancel: list[tuple[np.ndarray, complex]] = []  # (steering vector, gain)

    def measure(f: np.ndarray) -> complex:
        m = pilot_measure(sample.h, f, cfg.pnr_db, rng)
        for a_vec, g in cancel:
            m -= prefactor * g * np.vdot(a_vec, f)
        return m

    aods = angle_grid(cfg.grid_size)
    paths: list[tuple[float, complex]] = []
    for _ in range(cfg.l_est):
        node = 0
        for s in range(1, stages + 1):
            intervals = [
                _node_interval_u(s, 2 * node),
                _node_interval_u(s, 2 * node + 1),
            ]
            beams = [
                sounding_beam(math.asin(lo), math.asin(hi), n_t)
                for lo, hi in intervals
            ]
            m_left = measure(beams[0])
            m_right = measure(beams[1])
            node = 2 * node + (1 if abs(m_right) > abs(m_left) else 0)
        steer = array_response(float(aods[node]), n_t)
        gain = measure(steer) / prefactor
        cancel.append((steer, gain))
        paths.append((float(aods[node]), complex(gain)))
    path_params = [PathParams(gain=g, aod=a) for a, g in paths]
    return ChannelEstimate(
        h_est=reconstruct_h(path_params, n_t),
        paths_est=tuple(paths),
        pnr_db=cfg.pnr_db,
        source_seed=sample.seed,
    )
