"""Timing comparison of the estimator's numba and pure-numpy kernel builds.

Run a couple of times: the first numba call includes compilation, which the
cache absorbs on later runs. The two builds produce bit-identical estimates;
this script verifies that while timing them.

    python benchmarks/bench_estimator.py [count]
"""

import os
import sys
import time

os.environ.setdefault("BFNN_NO_NUMBA", "0")

import numpy as np

from bfnn import accel
from bfnn.channel import ChannelConfig, generate_dataset
from bfnn.estimator import EstimatorConfig, estimate_batch


def run_once(ds, cfg, seed):
    t0 = time.perf_counter()
    estimates = estimate_batch(ds, cfg, seed)
    dt = time.perf_counter() - t0
    return estimates, dt


def main():
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
    print(f"generating {count} channels (n_t=64, 3 paths)")
    ds = generate_dataset(ChannelConfig(n_t=64), 1, count)
    cfg = EstimatorConfig(pnr_db=0.0, l_est=3)

    if not accel.HAVE_NUMBA:
        print("numba not importable; nothing to compare")
        return

    os.environ[accel.NO_NUMBA_ENV] = "0"
    estimate_batch(ds.samples[:64], cfg, 0)  # warm the compilation cache
    nb_est, nb_time = run_once(ds, cfg, 7)

    os.environ[accel.NO_NUMBA_ENV] = "1"
    np_est, np_time = run_once(ds, cfg, 7)
    os.environ[accel.NO_NUMBA_ENV] = "0"

    identical = all(
        np.array_equal(a.h_est, b.h_est) and a.paths_est == b.paths_est
        for a, b in zip(nb_est, np_est)
    )
    per_nb = 1e6 * nb_time / count
    per_np = 1e6 * np_time / count
    print(f"numba kernel : {nb_time:8.3f} s  ({per_nb:8.1f} us/estimate)")
    print(f"numpy kernel : {np_time:8.3f} s  ({per_np:8.1f} us/estimate)")
    print(f"speedup      : {np_time / nb_time:8.1f}x")
    print(f"bit-identical: {identical}")
    if not identical:
        raise SystemExit("kernel builds disagree")


if __name__ == "__main__":
    main()
