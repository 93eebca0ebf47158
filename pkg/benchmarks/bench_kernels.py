"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the median wall time of each kernel per backend and the speedup.
"""

import argparse
import statistics
import time

import numpy as np

from switchstab import _kernels_py

try:
    from switchstab import _kernels as _compiled
except ImportError:
    _compiled = None


def _time(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def cases(rng):
    n, N = 4, 3
    A = rng.standard_normal((N, n, n)) + 1j * rng.standard_normal((N, n, n))
    B = rng.standard_normal((N, n)) + 1j * rng.standard_normal((N, n))
    V = rng.standard_normal((4096, n)) + 1j * rng.standard_normal((4096, n))
    Acl = 0.3 * rng.standard_normal((N, n, n))
    x0 = np.ones(n)
    seq = rng.integers(0, N, 100_000)
    P = np.eye(n)
    return {
        "cea_eval (4096 points, n=4, N=3)": lambda k: k.cea_eval(V, A, B, 1e-24),
        "rollout (100000 steps)": lambda k: k.rollout(Acl, x0, seq),
        "greedy_rollout (20000 steps)": lambda k: k.greedy_rollout(Acl, x0, 20_000, P),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy [s]':>12s} {'compiled [s]':>14s} {'speedup':>9s}")
    for name, call in cases(rng).items():
        t_py = _time(lambda: call(_kernels_py), args.repeat)
        if _compiled is None:
            print(f"{name:40s} {t_py:12.4f} {'-':>14s} {'-':>9s}")
            continue
        t_c = _time(lambda: call(_compiled), args.repeat)
        print(f"{name:40s} {t_py:12.4f} {t_c:14.4f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
