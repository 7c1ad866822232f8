"""Compare the compiled and numpy kernel backends.

Run with ``python benchmarks/bench_kernels.py``. Timings are the best of
several repeats; the script also checks that both backends agree.
"""
import argparse
import timeit

import numpy as np

from hpdg import _kernels_py

try:
    from hpdg import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def _workload(m, n, nderiv, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random(m)
    y = rng.random(m)
    # total degree exponents up to n
    pairs = [(a, d - a) for d in range(n + 1) for a in range(d, -1, -1)]
    ax = np.array([p[0] for p in pairs], dtype=np.intp)
    ay = np.array([p[1] for p in pairs], dtype=np.intp)
    return x, y, ax, ay


def run(backend, x, y, ax, ay, n, nderiv):
    px = backend.legendre_table(x, n, nderiv)
    py = backend.legendre_table(y, n, nderiv)
    return backend.tensor_products(px, py, ax, ay, nderiv)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=400)
    parser.add_argument("--degree", type=int, default=8)
    parser.add_argument("--nderiv", type=int, default=2)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=50)
    args = parser.parse_args(argv)

    x, y, ax, ay = _workload(args.points, args.degree, args.nderiv)
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    else:
        print("compiled backend not available; timing numpy only")

    ref = run(_kernels_py, x, y, ax, ay, args.degree, args.nderiv)
    timings = {}
    for name, mod in backends.items():
        out = run(mod, x, y, ax, ay, args.degree, args.nderiv)
        err = float(np.max(np.abs(out - ref)))
        t = min(timeit.repeat(
            lambda: run(mod, x, y, ax, ay, args.degree, args.nderiv),
            repeat=args.repeat, number=args.number)) / args.number
        timings[name] = t
        print(f"{name:8s} {t * 1e6:10.1f} us/call  max diff {err:.2e}")
    if len(timings) == 2:
        print(f"speedup  {timings['python'] / timings['cython']:.2f}x")


if __name__ == "__main__":
    main()
