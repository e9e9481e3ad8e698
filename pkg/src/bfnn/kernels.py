"""Hot inner loop of the hierarchical angle search.

The per-sample descent is serial (each stage depends on the previous
decision), so the batch dimension is the parallel axis. Two builds of the
same scalar logic exist: a numba @njit build (parallel over samples) and a
plain Python build. Inputs, outputs and arithmetic are identical; results
match bit for bit. accel.numba_enabled() decides which build runs.

Index layout shared with the codebook builder: stage s in 1..S contributes
2^s sector beams at offset 2^s - 2; the two children of node p from the
previous stage sit at offset + 2p and offset + 2p + 1. After stage S the
node index is the leaf grid index, and steering-vector columns for the gain
measurement start at sector_count = 2^(S+1) - 2.

Noise consumption order per cancellation pass: left beam, right beam for
each stage, then one gain measurement. Ties in |measurement| descend left.
"""

from __future__ import annotations

import numpy as np

from . import accel


def _search_batch_py(y_clean, noise, cross, stages, l_est, prefactor, out_idx, out_gain):
    n_batch, n_beams = y_clean.shape
    steer_off = (1 << (stages + 1)) - 2
    inv_pref = 1.0 / prefactor
    for b in range(n_batch):
        resid = y_clean[b].copy()
        k = 0
        for p in range(l_est):
            node = 0
            for s in range(1, stages + 1):
                base = (1 << s) - 2
                m_left = resid[base + 2 * node] + noise[b, k]
                m_right = resid[base + 2 * node + 1] + noise[b, k + 1]
                k += 2
                if abs(m_right) > abs(m_left):
                    node = 2 * node + 1
                else:
                    node = 2 * node
            m_gain = resid[steer_off + node] + noise[b, k]
            k += 1
            gain = m_gain * inv_pref  # reciprocal multiply: complex/float division rounds differently across builds
            for q in range(n_beams):
                resid[q] = resid[q] - prefactor * gain * cross[node, q]
            out_idx[b, p] = node
            out_gain[b, p] = gain


if accel.HAVE_NUMBA:
    import numba

    @numba.njit(cache=True, parallel=True)
    def _search_batch_nb(y_clean, noise, cross, stages, l_est, prefactor, out_idx, out_gain):  # pragma: no cover - compiled
        n_batch, n_beams = y_clean.shape
        steer_off = (1 << (stages + 1)) - 2
        inv_pref = 1.0 / prefactor
        for b in numba.prange(n_batch):
            resid = y_clean[b].copy()
            k = 0
            for p in range(l_est):
                node = 0
                for s in range(1, stages + 1):
                    base = (1 << s) - 2
                    m_left = resid[base + 2 * node] + noise[b, k]
                    m_right = resid[base + 2 * node + 1] + noise[b, k + 1]
                    k += 2
                    if abs(m_right) > abs(m_left):
                        node = 2 * node + 1
                    else:
                        node = 2 * node
                m_gain = resid[steer_off + node] + noise[b, k]
                k += 1
                gain = m_gain * inv_pref  # reciprocal multiply: complex/float division rounds differently across builds
                for q in range(n_beams):
                    resid[q] = resid[q] - prefactor * gain * cross[node, q]
                out_idx[b, p] = node
                out_gain[b, p] = gain
else:  # pragma: no cover - numba present in the reference environment
    _search_batch_nb = None


def search_batch(y_clean, noise, cross, stages, l_est, prefactor):
    """Run the bisection descent for a batch of measurement tables.

    Args:
        y_clean: (B, Q) noiseless beam measurements h^H f_q
        noise: (B, l_est*(2*stages+1)) pilot noise draws, consumed in order
        cross: (M, Q) steering-to-beam responses a(grid_k)^H f_q
        stages: number of bisection stages S
        l_est: number of cancellation passes
        prefactor: sqrt(n_t / l_est) gain scaling

    Returns:
        (idx, gains): (B, l_est) leaf grid indices and complex gain estimates
    """
    y_clean = np.ascontiguousarray(y_clean, dtype=np.complex128)
    noise = np.ascontiguousarray(noise, dtype=np.complex128)
    cross = np.ascontiguousarray(cross, dtype=np.complex128)
    n_batch = y_clean.shape[0]
    out_idx = np.empty((n_batch, l_est), dtype=np.int64)
    out_gain = np.empty((n_batch, l_est), dtype=np.complex128)
    impl = _search_batch_nb if accel.numba_enabled() else _search_batch_py
    impl(y_clean, noise, cross, stages, l_est, float(prefactor), out_idx, out_gain)
    return out_idx, out_gain
