"""Sparse multipath MISO channel generation for a half-wave-spaced ULA.

Channels are sums of L planar paths, one line-of-sight plus L-1 reflected,
each with a circularly-symmetric complex gain and an azimuth departure angle
drawn uniformly over [-pi/2, pi/2]. The stored vector h is the column whose
conjugate transpose is the row channel, so the receive signal model reads
h^H v for a transmit vector v.

All randomness runs through the Philox counter-based generator so datasets
regenerate bit-identically from their seeds on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HALF_PI = math.pi / 2.0


def rng_from_seed(seed: int) -> np.random.Generator:
    """Philox-backed generator keyed by a single integer seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def derive_seed(master_seed: int, *words: int) -> int:
    """Deterministic child seed from a master seed and index words.

    Uses numpy's SeedSequence entropy hashing, which is documented and stable
    across platforms. Returns a value that fits an unsigned 64-bit slot.
    """
    ss = np.random.SeedSequence([int(master_seed)] + [int(w) for w in words])
    return int(ss.generate_state(1, np.uint64)[0])


def array_response(aod: float, n_t: int) -> np.ndarray:
    """Steering vector of a half-wave-spaced uniform linear array.

    Element k carries phase pi*k*sin(aod); the vector is scaled by 1/sqrt(n_t)
    so its Euclidean norm is exactly 1.

    Args:
        aod: azimuth angle of departure in radians, within [-pi/2, pi/2]
        n_t: number of transmit antennas, >= 1

    Returns:
        complex128 vector of length n_t
    """
    if n_t < 1:
        raise ValueError(f"n_t must be >= 1, got {n_t}")
    if not (-HALF_PI <= aod <= HALF_PI):
        raise ValueError(f"aod {aod!r} outside [-pi/2, pi/2]")
    k = np.arange(n_t)
    return np.exp(1j * np.pi * k * math.sin(aod)) / math.sqrt(n_t)


@dataclass(frozen=True)
class PathParams:
    """One propagation path: complex gain, departure angle, LoS marker."""

    gain: complex
    aod: float
    is_los: bool = False


@dataclass(frozen=True)
class ChannelConfig:
    n_t: int = 64
    l_paths: int = 3
    los_gain_var: float = 1.0
    nlos_gain_var: float = 10.0 ** -0.5
    snr_db_min: float = -20.0
    snr_db_max: float = 20.0

    def validate(self) -> None:
        if self.n_t < 1:
            raise ValueError("n_t must be >= 1")
        if self.l_paths < 1:
            raise ValueError("l_paths must be >= 1")
        if self.los_gain_var <= 0 or self.nlos_gain_var < 0:
            raise ValueError("gain variances must be positive")
        if self.snr_db_min > self.snr_db_max:
            raise ValueError("snr_db_min must not exceed snr_db_max")

    def gain_vars(self) -> np.ndarray:
        return np.array(
            [self.los_gain_var] + [self.nlos_gain_var] * (self.l_paths - 1)
        )

    def to_dict(self) -> dict:
        return {
            "n_t": self.n_t,
            "l_paths": self.l_paths,
            "los_gain_var": self.los_gain_var,
            "nlos_gain_var": self.nlos_gain_var,
            "snr_db_min": self.snr_db_min,
            "snr_db_max": self.snr_db_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        return cls(**d)


@dataclass(frozen=True)
class ChannelSample:
    """One channel realization with its generating path parameters."""

    h: np.ndarray
    paths: tuple[PathParams, ...]
    snr: float
    seed: int


@dataclass(frozen=True)
class ChannelDataset:
    samples: tuple[ChannelSample, ...]
    n_t: int
    l_paths: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)


def reconstruct_h(paths, n_t: int) -> np.ndarray:
    """Rebuild the channel column from path parameters.

    Applies the sqrt(n_t / n_paths) sparse-model prefactor; gains enter
    conjugated because h is the conjugate of the row channel.
    """
    n_paths = len(paths)
    h = np.zeros(n_t, dtype=np.complex128)
    for p in paths:
        h += np.conj(p.gain) * array_response(p.aod, n_t)
    return math.sqrt(n_t / n_paths) * h


def sample_from_paths(
    paths, n_t: int, snr: float = 1.0, seed: int = 0
) -> ChannelSample:
    """Build a ChannelSample from explicit path parameters (tests, sweeps)."""
    return ChannelSample(
        h=reconstruct_h(paths, n_t), paths=tuple(paths), snr=snr, seed=seed
    )


def generate_channel(seed: int, config: ChannelConfig) -> ChannelSample:
    """Draw one channel realization, deterministic in the seed.

    Draw order is fixed: departure angles, then gain normals (re/im pairs in
    path order), then the SNR exponent. Gains are circularly symmetric with
    E[|gain|^2] equal to the configured per-path variance.
    """
    config.validate()
    rng = rng_from_seed(seed)
    lp = config.l_paths
    aods = rng.uniform(-HALF_PI, HALF_PI, lp)
    normals = rng.standard_normal((lp, 2))
    stds = np.sqrt(config.gain_vars() / 2.0)
    gains = (normals[:, 0] + 1j * normals[:, 1]) * stds
    snr_db = rng.uniform(config.snr_db_min, config.snr_db_max)
    paths = tuple(
        PathParams(gain=complex(gains[i]), aod=float(aods[i]), is_los=(i == 0))
        for i in range(lp)
    )
    return ChannelSample(
        h=reconstruct_h(paths, config.n_t),
        paths=paths,
        snr=10.0 ** (snr_db / 10.0),
        seed=seed,
    )


def generate_dataset(
    config: ChannelConfig, master_seed: int, count: int
) -> ChannelDataset:
    """Generate count independent samples with per-sample derived seeds.

    Sample i uses derive_seed(master_seed, i), so any sample regenerates on
    its own and parallel generation would produce the identical dataset.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    config.validate()
    samples = tuple(
        generate_channel(derive_seed(master_seed, i), config)
        for i in range(count)
    )
    meta = {
        "config": config.to_dict(),
        "master_seed": int(master_seed),
        "count": int(count),
    }
    return ChannelDataset(
        samples=samples, n_t=config.n_t, l_paths=config.l_paths, meta=meta
    )
