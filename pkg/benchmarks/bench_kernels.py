"""Benchmark the hot kernels: numba backend vs the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 20]

Imports both backend modules directly, so the CIRKIT_NUMBA flag does not
matter here. The first numba call per kernel pays JIT compilation; it is
excluded by a warmup call.
"""

import argparse
import time

import numpy as np

from cirkit.kernels import numba_impl, numpy_impl


def _unit_rows(rng, n, d):
    m = rng.normal(size=(n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _time(fn, *args, repeats):
    fn(*args)  # warmup (JIT compile / cache touch)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def _row(name, size, t_np, t_nb):
    speedup = t_np / t_nb if t_nb > 0 else float("inf")
    print(f"{name:<28} {size:<16} numpy {t_np * 1e3:9.3f} ms   "
          f"numba {t_nb * 1e3:9.3f} ms   speedup {speedup:6.2f}x")


def bench_slerp(rng, repeats):
    for n in (1_000, 100_000):
        a = _unit_rows(rng, n, 64)
        b = _unit_rows(rng, n, 64)
        t_np = _time(numpy_impl.slerp_rows, a, b, 0.5, repeats=repeats)
        t_nb = _time(numba_impl.slerp_rows, a, b, 0.5, repeats=repeats)
        _row("slerp_rows", f"{n}x64", t_np, t_nb)


def bench_nearest(rng, repeats):
    for n in (256, 2_048):
        emb = _unit_rows(rng, n, 64)
        t_np = _time(numpy_impl.nearest_neighbor_indices, emb, repeats=repeats)
        t_nb = _time(numba_impl.nearest_neighbor_indices, emb, repeats=repeats)
        _row("nearest_neighbor_indices", f"{n}x64", t_np, t_nb)


def bench_greedy(rng, repeats):
    for n in (10_000, 200_000):
        sims = np.sort(rng.random(n))[::-1].copy()
        args = (sims, 0.5, 0.95, 0.03, 5)
        t_np = _time(numpy_impl.greedy_spaced_select, *args, repeats=repeats)
        t_nb = _time(numba_impl.greedy_spaced_select, *args, repeats=repeats)
        _row("greedy_spaced_select", f"{n}", t_np, t_nb)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<28} {'size':<16} best of {args.repeats}")
    bench_slerp(rng, args.repeats)
    bench_nearest(rng, args.repeats)
    bench_greedy(rng, args.repeats)


if __name__ == "__main__":
    main()
