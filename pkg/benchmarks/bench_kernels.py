"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The end-to-end row runs a small square-function sweep in two fresh
interpreters, one with BRLAB_PURE_NUMPY=1.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from brlab import _kernels


def best_of(fn, repeat):
    fn()  # warm-up (numba compiles on first call)
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def cases(rng):
    n = 256
    sizes = rng.integers(20, 120, 200)
    off = np.r_[0, np.cumsum(sizes)].astype(np.int64)
    m = int(off[-1])
    k1 = rng.integers(0, n, m).astype(np.int64)
    k2 = rng.integers(0, n, m).astype(np.int64)
    v = rng.normal(size=m) + 1j * rng.normal(size=m)
    yield ("accumulate_pairs",
           lambda: _kernels._accumulate_pairs_np(off, k1, k2, v, n, np.zeros((n, n), complex)),
           lambda: _kernels._accumulate_pairs_nb(off, k1, k2, v, n, np.zeros((n, n), complex)))

    f = rng.random((512, 512))
    sp, sq = rng.uniform(-30, 30, 32), rng.uniform(-30, 30, 32)
    yield ("shift_average",
           lambda: _kernels._shift_average_np(f, sp, sq),
           lambda: _kernels._shift_average_nb(f, sp, sq))

    coef = np.array([1.0, 0.0, 1.0])
    tg = rng.uniform(-0.39, 0.39, 200_000)
    yield ("ratio_bisect",
           lambda: _kernels._ratio_bisect_np(coef, 0, -0.5, 0.5, True, tg),
           lambda: _kernels._ratio_bisect_nb(coef, 0, -0.5, 0.5, True, tg))


SWEEP = """
import time
from brlab import lab
cfg = lab.ExperimentConfig.for_experiment('l2-scaling', half_width=8.0, n=128, n_fields=2, n_boot=20)
lab.run_l2_scaling(cfg)
t0 = time.perf_counter()
lab.run_l2_scaling(cfg)
print(time.perf_counter() - t0)
"""


def end_to_end(pure: bool) -> float:
    env = dict(os.environ, BRLAB_PURE_NUMPY="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", SWEEP], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.split()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-sweep", action="store_true")
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not available (or BRLAB_PURE_NUMPY is set)")
    rng = np.random.default_rng(0)
    print(f"{'kernel':20s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speed-up':>9s}")
    for name, np_fn, nb_fn in cases(rng):
        a, b = best_of(np_fn, args.repeat), best_of(nb_fn, args.repeat)
        print(f"{name:20s} {a:10.4f} {b:10.4f} {a / b:9.1f}")
    if not args.skip_sweep:
        a, b = end_to_end(True), end_to_end(False)
        print(f"{'l2 sweep (128^2)':20s} {a:10.4f} {b:10.4f} {a / b:9.1f}")


if __name__ == "__main__":
    main()
