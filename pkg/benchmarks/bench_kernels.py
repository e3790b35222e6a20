"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time of each backend, the
speedup, and whether the outputs agree.
"""
import argparse
import timeit

import numpy as np

from svtlab import _fallback

try:
    from svtlab import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    n = 10_000
    margins = rng.normal(0, 50, n)
    nu = rng.laplace(0, 20, n)
    rho = rng.laplace(0, 5, 101)
    yield "svt_scan (10k queries, abort at 100)", "svt_scan", (margins, nu, rho, 100, False)
    yield "svt_scan redraw (10k, c=100)", "svt_scan", (margins, nu, rho, 100, True)
    yield "svt_scan no abort (10k)", "svt_scan", (margins, nu, rho, 0, False)

    rows, cols = 200_000, 6
    noisy = rng.laplace(0, 2, (rows, cols))
    rho_mc = rng.laplace(0, 2, (rows, 3))
    rho_index = np.array([0, 0, 1, 1, 2, 2])
    codes = np.array([0, 1, 0, 1, 0, 0], dtype=np.int8)
    ok = np.ones((rows, cols), dtype=np.uint8)
    yield "mc_match_count (200k x 6)", "mc_match_count", (noisy, rho_mc, rho_index, codes, ok)

    z = np.linspace(-40, 40, 4001)
    below = rng.normal(0, 1, 32)
    above = rng.normal(0, 1, 32)
    yield "log_integrand (4001 pts, 64 terms)", "log_integrand", (z, below, above, 2.0, 4.0)


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b)) or np.allclose(a, b, rtol=1e-13, atol=0)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    if _kernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':40s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}  agree")
    for label, name, call_args in cases(rng):
        py_fn = getattr(_fallback, name)
        t_py = min(timeit.repeat(lambda: py_fn(*call_args), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{label:40s} {t_py * 1e3:10.3f}")
            continue
        cy_fn = getattr(_kernels, name)
        t_cy = min(timeit.repeat(lambda: cy_fn(*call_args), number=1, repeat=args.repeat))
        agree = same(py_fn(*call_args), cy_fn(*call_args))
        print(f"{label:40s} {t_py * 1e3:10.3f} {t_cy * 1e3:10.3f} {t_py / t_cy:8.1f}x  {agree}")


if __name__ == "__main__":
    main()
