#!/usr/bin/env python3
"""Time the GEMV kernels over a sweep of square sizes.

Prints one row per size with the best-of-N wall time and effective GFLOP/s
for the reference kernel, the optimized kernel, and the quantized sketch.
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from quantloop.kernels import (
    GemvParams,
    Layout,
    Trans,
    gemv_naive,
    gemv_opt,
    gemv_sketch,
)
from quantloop.quantizer import QuantConfig, quantize_matrix


def best_of(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="512,1024,2048,4096",
                        help="comma-separated square matrix sizes")
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--bits", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"{'size':>6} {'naive ms':>10} {'opt ms':>10} {'sketch ms':>10} "
          f"{'opt GFLOP/s':>12} {'speedup':>8}")
    for n in sizes:
        a = rng.standard_normal((n, n)).astype(np.float32)
        x = rng.standard_normal(n).astype(np.float32)
        y = np.zeros(n, dtype=np.float32)
        flat = a.reshape(-1)
        q = quantize_matrix(a, QuantConfig(bit_width=args.bits))
        p = GemvParams(layout=Layout.ROW_MAJOR, trans=Trans.NO_TRANS, m=n, n=n,
                       alpha=1.0, beta=0.0, lda=n, incx=1, incy=1)

        gemv_opt(flat, x, y, p)  # warm up
        t_naive = best_of(lambda: gemv_naive(flat, x, y, p), max(args.reps // 2, 1))
        t_opt = best_of(lambda: gemv_opt(flat, x, y, p), args.reps)
        t_sketch = best_of(lambda: gemv_sketch(q, x, y, p), max(args.reps // 2, 1))

        flops = 2.0 * n * n
        print(f"{n:>6} {t_naive * 1e3:>10.3f} {t_opt * 1e3:>10.3f} "
              f"{t_sketch * 1e3:>10.3f} {flops / t_opt / 1e9:>12.2f} "
              f"{t_naive / t_opt:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
