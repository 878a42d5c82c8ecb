"""Time the compiled core against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on
identical inputs with both backends and the best of several repeats is
reported, together with the largest difference between the results.
"""
import argparse
import time

import numpy as np

from shallow_landscape import kernels
from shallow_landscape.activations import parse_activation


def _best(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_gd(mod, k, d, n, iters, activation, repeats):
    spec = parse_activation(activation)
    rng = np.random.default_rng(0)
    W0 = rng.standard_normal((k, d)) / np.sqrt(d)
    v0 = rng.standard_normal(k)
    X = rng.standard_normal((d, n))
    y = rng.standard_normal(n)

    def run():
        W, v = W0.copy(), v0.copy()
        trace = np.empty(iters // 100 + 2)
        mod.gd_loop(W, v, X, y, spec.code, float(spec.b), 1e-3, iters, 1e-30, 1e-30, True, 100, trace)
        return W

    return _best(run, repeats)


def bench_svd(mod, m, p, repeats):
    A = np.random.default_rng(1).standard_normal((m, p))

    def run():
        work = A.copy()
        mod.jacobi_svd(work, 1e-15, 100)
        return work

    return _best(run, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--iters", type=int, default=2000)
    args = parser.parse_args()
    mods = kernels.backends()
    if "compiled" not in mods:
        print("compiled core not built; only the fallback is available")
    cases = [
        ("gd_loop quad k=10 d=20 n=100", lambda m: bench_gd(m, 10, 20, 100, args.iters, "quad", args.repeats)),
        ("gd_loop softplus:10 k=12 d=10 n=100",
         lambda m: bench_gd(m, 12, 10, 100, args.iters, "softplus:10", args.repeats)),
        ("gd_loop tanh k=4 d=5 n=20", lambda m: bench_gd(m, 4, 5, 20, args.iters, "tanh", args.repeats)),
        ("jacobi_svd 100x36", lambda m: bench_svd(m, 100, 36, args.repeats)),
        ("jacobi_svd 400x64", lambda m: bench_svd(m, 400, 64, args.repeats)),
    ]
    print(f"{'case':40s} {'python [s]':>12s} {'compiled [s]':>13s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in cases:
        tp, outp = fn(mods["python"])
        if "compiled" in mods:
            tc, outc = fn(mods["compiled"])
            diff = float(np.max(np.abs(outp - outc)))
            print(f"{name:40s} {tp:12.4f} {tc:13.4f} {tp / tc:8.1f} {diff:10.1e}")
        else:
            print(f"{name:40s} {tp:12.4f} {'-':>13s} {'-':>8s} {'-':>10s}")


if __name__ == "__main__":
    main()
