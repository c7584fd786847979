"""Time the numba and pure-numpy versions of the hot kernels side by side.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both versions are called directly, so the PSIDIM_PURE_NUMPY flag does not
matter here.  The first numba call (compilation, or loading the on-disk
cache) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from psidim import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def shatter_case(rng, k, n_opt, n_fun, gamma):
    # dyadic values in [-1, 1]; gamma > 1 can never shatter, so the search
    # runs through every candidate (the worst case)
    plus = rng.integers(-4, 5, size=(k, n_opt, n_fun)) / 4.0
    minus = rng.integers(-4, 5, size=(k, n_opt, n_fun)) / 4.0
    upper = np.ascontiguousarray(_kernels.largest_witness(plus, gamma))
    return plus, minus, upper, gamma


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(args.seed)

    rows = []
    for n, F, Q in [(4, 50, 3), (8, 200, 3), (16, 400, 5)]:
        vals = np.ascontiguousarray(rng.normal(size=(n, F, Q)))
        _kernels.distance_matrix_numba(vals)
        t_np, a = best_of(lambda: _kernels.distance_matrix_numpy(vals), args.repeat)
        t_nb, b = best_of(lambda: _kernels.distance_matrix_numba(vals), args.repeat)
        assert np.array_equal(a, b)
        rows.append((f"distance_matrix n={n} F={F} Q={Q}", t_np, t_nb))

    for k, A, F, gamma in [(2, 6, 8, 0.5), (3, 6, 12, 0.5), (2, 6, 8, 1.5), (3, 6, 8, 1.5)]:
        plus, minus, upper, gamma = shatter_case(rng, k, A, F, gamma)
        _kernels.shatter_search_numba(plus, minus, upper, gamma)
        t_np, a = best_of(lambda: _kernels.shatter_search_numpy(plus, minus, upper, gamma), args.repeat)
        t_nb, b = best_of(lambda: _kernels.shatter_search_numba(plus, minus, upper, gamma), args.repeat)
        assert bool(a[0]) == bool(b[0]) and all(np.array_equal(x, y) for x, y in zip(a[1:], b[1:]))
        rows.append((f"shatter_search k={k} options={A} F={F} found={bool(a[0])}", t_np, t_nb))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel'.ljust(width)}  {'numpy s':>10}  {'numba s':>10}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        print(f"{name.ljust(width)}  {t_np:10.5f}  {t_nb:10.5f}  {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
