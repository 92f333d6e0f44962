"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--n 30] [--repeat 5]
"""
import argparse
import time

import numpy as np

from tasepmf._backend import get_kernels
from tasepmf.lattice import IndexLayout, LatticeParams
from tasepmf.meanfield import DENOMINATOR_THRESHOLD, closure_indices


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_ssa(k, n, n_uniforms, repeat):
    p = LatticeParams.uniform(n, 0.75, 0.75)
    u = np.random.default_rng(1).random(n_uniforms)

    def run():
        config = np.zeros(n, dtype=np.uint8)
        k.ssa_advance(config, 0.0, np.inf, p.alpha, p.beta, p.hop_array, u,
                      np.zeros(n), np.zeros(4 * (n - 1)))
    return best_of(run, repeat)


def bench_closure(k, n, m, calls, repeat):
    # product measure with density 1/2: any valid order-m vector will do
    layout = IndexLayout(n, m)
    x = np.empty(layout.size)
    for order in range(1, m + 1):
        x[layout.block(order)] = 0.5 ** order
    idx = closure_indices(n, m)
    out = np.empty(idx[0].size)

    def run():
        for _ in range(calls):
            k.cluster_closure(x, *idx, out, DENOMINATOR_THRESHOLD)
    return best_of(run, repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--uniforms", type=int, default=200_000)
    ap.add_argument("--calls", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = {"python": get_kernels("python")}
    try:
        backends["cython"] = get_kernels("cython")
    except ImportError:
        print("compiled extension not built; timing the Python kernels only")

    rows = []
    for name, k in backends.items():
        rows.append((name, "ssa_advance", bench_ssa(k, args.n, args.uniforms, args.repeat)))
        rows.append((name, "cluster_closure", bench_closure(k, args.n, args.m, args.calls, args.repeat)))
    print(f"n={args.n} m={args.m} uniforms={args.uniforms} closure calls={args.calls}")
    print(f"{'backend':<8} {'kernel':<16} {'best [s]':>10}")
    for name, kernel, t in rows:
        print(f"{name:<8} {kernel:<16} {t:10.4f}")
    if len(backends) == 2:
        for kernel in ("ssa_advance", "cluster_closure"):
            tp = next(t for b, kk, t in rows if b == "python" and kk == kernel)
            tc = next(t for b, kk, t in rows if b == "cython" and kk == kernel)
            print(f"speedup {kernel}: {tp / tc:.1f}x")


if __name__ == "__main__":
    main()
