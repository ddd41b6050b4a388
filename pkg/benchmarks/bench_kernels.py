"""Compare the compiled and numpy kernels on the solver's hot loops.

    python benchmarks/bench_kernels.py [--n 18] [--repeat 3]
"""

import argparse
import time

import numpy as np

from attrpi import _pykernels, kernels

try:
    from attrpi import _ckernels
except ImportError:
    _ckernels = None


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=18, help="binary dimension for enumeration")
    ap.add_argument("--pg-n", type=int, default=200, help="dimension for projected gradient")
    ap.add_argument("--match-n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)

    A = rng.normal(size=(args.n, args.n))
    Q = A @ A.T / args.n
    c = rng.uniform(-1, 1, args.n)
    q = np.zeros(args.n)

    B = rng.normal(size=(args.pg_n, args.pg_n))
    M = -(B @ B.T) / args.pg_n
    cp = rng.uniform(-1, 1, args.pg_n)
    g = rng.uniform(0, 1, args.pg_n)
    lo, hi = np.zeros(args.pg_n), np.ones(args.pg_n)

    cls = rng.integers(0, 50, args.match_n)
    exposed = rng.integers(0, 2, args.match_n)
    keys = rng.random(args.match_n)

    cases = {
        f"gray_enumerate n={args.n}": lambda impl: kernels.gray_enumerate(c, Q, q, 1.96, impl=impl)[0],
        f"pg_maximize n={args.pg_n}": lambda impl: kernels.pg_maximize(cp, M, g, 1.0, 1.96, lo, hi, impl=impl)[1],
        f"matched_mask n={args.match_n}": lambda impl: int(kernels.matched_mask(cls, exposed, keys, 50, impl=impl).sum()),
    }
    print(f"{'kernel':<28}{'python s':>12}{'cython s':>12}{'speedup':>10}  agree")
    for name, fn in cases.items():
        tp, vp = _time(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<28}{tp:>12.4f}{'n/a':>12}{'':>10}  -")
            continue
        tc, vc = _time(lambda: fn(_ckernels), args.repeat)
        agree = np.isclose(vp, vc, rtol=1e-7, atol=1e-9)
        print(f"{name:<28}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}  {bool(agree)}")


if __name__ == "__main__":
    main()
