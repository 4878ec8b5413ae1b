"""Micro-benchmark: numba kernel flavor vs the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py [--sizes 256,4096,65536] [--repeats 200]

The numba flavor fuses dot + both norms into one pass over the data, which
is where it should pay off against numpy's three separate traversals.
"""

import argparse
import time

import numpy as np

from gradremedy import _kernels

KERNELS = [
    ("dot_and_norms", lambda f, a, b: f(a, b)),
    ("norm", lambda f, a, b: f(a)),
    ("add_scaled", lambda f, a, b: f(a, 0.37, b)),
    ("vec_add", lambda f, a, b: f(a, b)),
    ("scale", lambda f, a, b: f(a, 0.37)),
]


def best_of(call, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        call()
        best = min(best, time.perf_counter() - t0)
    return best * 1e6  # microseconds


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="256,4096,65536,1048576")
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",") if s]

    if _kernels.dot_and_norms_numba is None:
        print("numba flavor unavailable; nothing to compare")
        return

    print(f"active backend: {_kernels.active_backend()}")
    print(f"{'kernel':>14} {'size':>9} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    rng = np.random.Generator(np.random.PCG64(0))
    for size in sizes:
        a = rng.standard_normal(size)
        b = rng.standard_normal(size)
        for name, apply in KERNELS:
            fn_numpy = getattr(_kernels, f"{name}_numpy")
            fn_numba = getattr(_kernels, f"{name}_numba")
            apply(fn_numba, a, b)  # warm-up absorbs JIT compilation
            t_numpy = best_of(lambda: apply(fn_numpy, a, b), args.repeats)
            t_numba = best_of(lambda: apply(fn_numba, a, b), args.repeats)
            print(
                f"{name:>14} {size:>9} {t_numpy:>10.2f} {t_numba:>10.2f} "
                f"{t_numpy / t_numba:>7.2f}x"
            )


if __name__ == "__main__":
    main()
