"""Independent oracles used by the test suite.

These deliberately avoid the library's own closed-form paths: brute force
for the phase-matching optimum, direct per-sample arithmetic for rates.
"""

import numpy as np


def brute_force_egt(h: np.ndarray, levels: int = 360):
    """Exhaustive unit-modulus search with the first phase fixed to zero.

    Returns (best_amp, best_phases) where best_amp = max |h^H v| over the
    quantized grid and best_phases has phase 0 in slot 0. Only intended for
    len(h) <= 3.
    """
    n = len(h)
    grid = 2 * np.pi * np.arange(levels) / levels
    if n == 1:
        return abs(h[0]), np.zeros(1)
    if n == 2:
        vals = np.conj(h[0]) + np.conj(h[1]) * np.exp(1j * grid)
        k = int(np.argmax(np.abs(vals)))
        return float(np.abs(vals[k])), np.array([0.0, grid[k]])
    if n == 3:
        e1 = np.exp(1j * grid)[:, None]
        e2 = np.exp(1j * grid)[None, :]
        vals = np.conj(h[0]) + np.conj(h[1]) * e1 + np.conj(h[2]) * e2
        flat = int(np.argmax(np.abs(vals)))
        i, j = np.unravel_index(flat, vals.shape)
        return float(np.abs(vals[i, j])), np.array([0.0, grid[i], grid[j]])
    raise ValueError("brute force oracle limited to n <= 3")


def rate_by_hand(h, v, gamma, n_t):
    """Rate from first principles: explicit inner product, log base change."""
    acc = 0.0 + 0.0j
    for hi, vi in zip(h, v):
        acc += complex(hi).conjugate() * complex(vi)
    return np.log(1.0 + (gamma / n_t) * abs(acc) ** 2) / np.log(2.0)


def circular_diff(a, b):
    """Smallest absolute angular difference."""
    d = np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b))))
    return np.abs(d)
