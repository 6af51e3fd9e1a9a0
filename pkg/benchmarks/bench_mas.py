"""Timing comparison of the alignment backends.

Runs the same batch of random likelihood matrices through the compiled
kernel and the numpy fallback, checks they agree, and prints per-call
timings over a grid of problem sizes.

    python3 benchmarks/bench_mas.py [--repeats 50]
"""

import argparse
import time

import numpy as np

from pitchflow import align


def time_backend(backend, matrices, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for m in matrices:
            align.mas(m, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best / len(matrices)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--batch", type=int, default=8)
    args = parser.parse_args()

    if not align.COMPILED_AVAILABLE:
        print("compiled kernel not built; only the numpy fallback is available")
        return

    rng = np.random.default_rng(0)
    print(f"{'tokens':>7} {'frames':>7} {'compiled':>12} {'numpy':>12} {'speedup':>8}")
    for n, t in [(10, 40), (20, 100), (40, 200), (80, 400), (160, 800)]:
        matrices = [rng.standard_normal((n, t)) for _ in range(args.batch)]
        for m in matrices:
            a = align.mas(m, backend="compiled")
            b = align.mas(m, backend="numpy")
            if not np.array_equal(a, b):
                raise AssertionError(f"backends disagree at ({n}, {t})")
        fast = time_backend("compiled", matrices, args.repeats)
        slow = time_backend("numpy", matrices, args.repeats)
        print(f"{n:>7} {t:>7} {fast * 1e3:>10.3f}ms {slow * 1e3:>10.3f}ms "
              f"{slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
