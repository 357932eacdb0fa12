#!/usr/bin/env python3
"""Compare the numba and numpy variants of the two hot kernels.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 5]

Both variants are checked for identical outputs before timing. The first
jitted call (compilation, or a cache load) is reported separately.
"""

import argparse
import time

import numpy as np

from ctxsolve import kernels
from ctxsolve.events import EventLP, _flow_network


def time_call(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def flow_case(M, K, seed):
    rng = np.random.default_rng(seed)
    lp = EventLP(-rng.random((M, K)) * 10, 1, int(np.ceil(2 * M / K)), assign_all=True)
    return _flow_network(lp)


def bench_flow(M, K, repeats):
    cap, cost, s, t, demand = flow_case(M, K, 0)

    def run(fn):
        c = cap.copy()
        flow, total = fn(c, cost, s, t, demand)
        return int(flow), float(total), c

    t0 = time.perf_counter()
    run(kernels.min_cost_flow_jit)
    first = time.perf_counter() - t0
    tj, (fj, cj, capj) = time_call(lambda: run(kernels.min_cost_flow_jit), repeats)
    tn, (fn_, cn, capn) = time_call(lambda: run(kernels.min_cost_flow_numpy), repeats)
    assert fj == fn_ and np.array_equal(capj, capn) and abs(cj - cn) < 1e-9 * max(1.0, abs(cj))
    return first, tj, tn


def bench_mp(n, L, repeats):
    rng = np.random.default_rng(1)
    unary = rng.standard_normal((n, L))
    theta = rng.standard_normal((L, L)) * 0.1
    theta = theta + theta.T
    args = (unary, theta, 0.5, 50, 1e-6)
    t0 = time.perf_counter()
    kernels.max_product_jit(*args)
    first = time.perf_counter() - t0
    tj, oj = time_call(lambda: kernels.max_product_jit(*args), repeats)
    tn, on = time_call(lambda: kernels.max_product_numpy(*args), repeats)
    assert np.array_equal(oj[0], on[0]) and oj[2] == on[2]
    return first, tj, tn


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if not kernels.USE_JIT:
        raise SystemExit("numba is disabled (CTXSOLVE_DISABLE_JIT) or missing; nothing to compare")
    print(f"{'kernel':<34}{'first call':>12}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    rows = []
    for M, K in [(50, 5), (100, 8), (300, 20)]:
        rows.append((f"min_cost_flow M={M} K={K}", *bench_flow(M, K, args.repeats)))
    for n, L in [(3, 20), (6, 50), (10, 100)]:
        rows.append((f"max_product n={n} L={L}", *bench_mp(n, L, args.repeats)))
    for name, first, tj, tn in rows:
        print(f"{name:<34}{first * 1e3:>10.1f}ms{tj * 1e3:>10.2f}ms{tn * 1e3:>10.2f}ms{tn / tj:>9.1f}x")


if __name__ == "__main__":
    main()
