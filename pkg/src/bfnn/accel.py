"""Numba acceleration toggle.

Hot kernels ship in two equivalent flavours: a numba @njit build and a pure
numpy/Python build. The numba build is used when numba imports cleanly and the
environment variable BFNN_NO_NUMBA is unset (or "0"). Both builds consume
identical inputs and perform identical scalar arithmetic, so results are
bit-identical either way; see benchmarks/bench_estimator.py for the speed gap.
"""

from __future__ import annotations

import os

NO_NUMBA_ENV = "BFNN_NO_NUMBA"
THREADS_ENV = "BFNN_THREADS"

try:
    import numba

    # workqueue avoids probing optional TBB/OpenMP layers; kernel outputs are
    # thread-count independent, so the layer choice only affects speed
    numba.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via BFNN_NO_NUMBA instead
    numba = None
    HAVE_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get(NO_NUMBA_ENV, "0") not in ("", "0")


def numba_enabled() -> bool:
    """True when the @njit kernel flavour should be used."""
    return HAVE_NUMBA and not numba_disabled_by_env()


def njit(**kwargs):
    """numba.njit when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(**kwargs)

    def passthrough(fn):
        return fn

    return passthrough


def resolve_threads(requested: int | None = None) -> int:
    """Thread count from an explicit request, BFNN_THREADS, or cpu count."""
    if requested is not None and requested >= 1:
        return requested
    env = os.environ.get(THREADS_ENV, "")
    if env.isdigit() and int(env) >= 1:
        return int(env)
    return os.cpu_count() or 1


def set_kernel_threads(n: int) -> None:
    """Cap numba's worker pool; no-op for the numpy flavour."""
    if HAVE_NUMBA:
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
