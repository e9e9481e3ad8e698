"""Spectral efficiency and closed-form transmit beamforming references.

With a single RF chain the constant-modulus rate maximizer is phase
matching: set every phase-shifter angle to the phase of the corresponding
channel entry, which attains |h^H v| = sum_i |h_i|. Both iterative designs
commonly benchmarked in this regime converge to that same point, so the
closed form stands in for them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AnalogBeamformer:
    """Phase-shifter settings and their unit-modulus complex image."""

    theta: np.ndarray
    v_rf: np.ndarray
    degenerate: bool = False


def beamformer_from_phases(theta: np.ndarray, degenerate: bool = False) -> AnalogBeamformer:
    theta = np.asarray(theta, dtype=np.float64)
    v_rf = np.cos(theta) + 1j * np.sin(theta)
    return AnalogBeamformer(theta=theta, v_rf=v_rf, degenerate=degenerate)


def spectral_efficiency(h: np.ndarray, v_rf: np.ndarray, gamma: float, n_t: int) -> float:
    """Achievable rate log2(1 + (gamma/n_t) |h^H v|^2) in bits/s/Hz."""
    h = np.asarray(h)
    v_rf = np.asarray(v_rf)
    if h.shape != (n_t,) or v_rf.shape != (n_t,):
        raise ValueError(
            f"h/v length mismatch: {h.shape}, {v_rf.shape}, n_t={n_t}"
        )
    return float(np.log2(1.0 + (gamma / n_t) * np.abs(np.vdot(h, v_rf)) ** 2))


def spectral_efficiency_batch(
    H: np.ndarray, V: np.ndarray, gamma, n_t: int
) -> np.ndarray:
    """Row-wise spectral efficiency for stacked channels and beamformers."""
    z = np.abs(np.sum(np.conj(H) * V, axis=1)) ** 2
    return np.log2(1.0 + (np.asarray(gamma) / n_t) * z)


def egt_beamformer(h: np.ndarray) -> AnalogBeamformer:
    """Equal-gain phase-matching beamformer, theta_i = arg(h_i).

    Zero-magnitude entries get phase 0; an all-zero channel returns the
    all-zero phase vector flagged degenerate.
    """
    h = np.asarray(h, dtype=np.complex128)
    if not np.any(h != 0):
        return beamformer_from_phases(np.zeros(h.shape[0]), degenerate=True)
    theta = np.where(h != 0, np.angle(h), 0.0)
    return beamformer_from_phases(theta)


def baseline_on_estimate(h_est: np.ndarray) -> AnalogBeamformer:
    """Traditional design under imperfect CSI: phase-match the estimate.

    The returned beamformer is meant to be scored against the true channel.
    """
    return egt_beamformer(h_est)


def perfect_csi_bound(h: np.ndarray, gamma: float, n_t: int) -> float:
    """Single-RF-chain constant-modulus optimum log2(1 + (gamma/n_t)(sum|h_i|)^2)."""
    a = float(np.abs(np.asarray(h)).sum())
    return float(np.log2(1.0 + (gamma / n_t) * a * a))


def perfect_csi_bound_batch(H: np.ndarray, gamma, n_t: int) -> np.ndarray:
    a = np.abs(H).sum(axis=1)
    return np.log2(1.0 + (np.asarray(gamma) / n_t) * a * a)
