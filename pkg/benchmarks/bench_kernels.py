"""Compare the compiled and numpy kernels on batches typical of MLMC and ASGQ use.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from numsmooth import kernels

CASES = [
    # (label, P samples, d assets, N steps, Q points)
    ("mlmc newton", 4096, 1, 64, 1),
    ("mlmc laguerre", 4096, 1, 64, 32),
    ("asgq basket", 2048, 4, 8, 33),
    ("fine grid", 512, 1, 256, 16),
]


def make(P, d, N, Q, seed=0):
    rng = np.random.default_rng(seed)
    x0 = np.full(d, 100.0)
    a = 1.0 + 0.02 * rng.standard_normal((P, d, N))
    b = np.abs(0.01 * rng.standard_normal((P, d, N)))
    y = rng.standard_normal((P, Q))
    c = np.full(d, 1.0 / d)
    return x0, a, b, y, c


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'case':16s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for label, P, d, N, Q in CASES:
        x0, a, b, y, c = make(P, d, N, Q)
        times = {}
        out = {}
        for be in ("python", "cython"):
            fn = lambda: kernels.weighted_residual(x0, a, b, y, c, 100.0, backend=be)  # noqa: E731
            out[be] = fn()[0]
            times[be] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        diff = float(np.max(np.abs(out["python"] - out["cython"])))
        print(f"{label:16s} {times['python']:10.2f} {times['cython']:10.2f} "
              f"{times['python'] / times['cython']:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
