"""Compiled vs fallback DTW timings.

    python benchmarks/bench_dtw.py [--n 60] [--windows 40] [--repeat 3]
"""

import argparse
import time

import numpy as np

from agentfm import _kernels
from agentfm._kernels import _fallback

try:
    from agentfm._kernels import _dtw as _compiled
except ImportError:
    _compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=60, help="sequence length")
    ap.add_argument("--windows", type=int, default=40, help="sequences in the pairwise matrix")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    a, b = rng.random(args.n), rng.random(args.n)
    seqs = [rng.random(args.n) for _ in range(args.windows)]
    impls = [("python", _fallback)] + ([("cython", _compiled)] if _compiled else [])

    print(f"default backend: {_kernels.BACKEND}")
    print(f"{'impl':8} {'single (ms)':>12} {'matrix (ms)':>12}")
    rows = {}
    for name, impl in impls:
        single = best_of(lambda: _kernels.dtw_distance(a, b, impl=impl), args.repeat)
        matrix = best_of(lambda: _kernels.dtw_matrix(seqs, impl=impl), args.repeat)
        rows[name] = (single, matrix)
        print(f"{name:8} {single * 1e3:12.3f} {matrix * 1e3:12.3f}")
    if len(rows) == 2:
        (ps, pm), (cs, cm) = rows["python"], rows["cython"]
        print(f"speedup: single x{ps / cs:.1f}, matrix x{pm / cm:.1f}")
        m1 = _kernels.dtw_matrix(seqs, impl=_fallback)
        m2 = _kernels.dtw_matrix(seqs, impl=_compiled)
        print(f"max abs difference: {np.abs(m1 - m2).max():.3g}")


if __name__ == "__main__":
    main()
