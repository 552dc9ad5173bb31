"""Compare the compiled and numpy primal-dual kernels.

    python3 benchmarks/bench_kernel.py [--sizes 10 100 1000] [--iters 2000] [--solves 20]

Two measurements per integrand and graph size: raw inner-loop throughput
(iterations per second of ``pdhg_iterate``) and wall time of complete
certified resolvent solves on random data.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from metricflow import parse_integrand
from metricflow.corpus import random_graph
from metricflow.kernel import BACKEND, get_backend
from metricflow.resolvent import ResolventProblem, operator_norm, solve_resolvent

SPECS = ("p:2", "p:1.5", "qp:1.5,3", "1p:2")


def kernel_rate(space, integrand, backend: str, iters: int, seed: int = 0) -> float:
    pdhg, _ = get_backend(backend)
    rng = np.random.default_rng(seed)
    g = rng.uniform(-1, 1, space.n)
    u, ubar = g.copy(), g.copy()
    Y, work, root = np.zeros(space.n_edges), np.zeros(space.n), np.zeros(space.n_edges)
    step = 1.0 / operator_norm(space)
    tail = np.ascontiguousarray(space.tail, dtype=np.intp)
    head = np.ascontiguousarray(space.head, dtype=np.intp)
    args = (tail, head, space.nu, space.m, g, 1.0, integrand.code, integrand.p, integrand.q, step, step)
    pdhg(*args, u, ubar, Y, work, root, 10)  # warm-up
    t0 = time.perf_counter()
    pdhg(*args, u, ubar, Y, work, root, iters)
    return iters / (time.perf_counter() - t0)


def solve_time(space, integrand, backend: str, solves: int, seed: int = 0) -> tuple[float, int]:
    rng = np.random.default_rng(seed)
    total, iters = 0.0, 0
    for _ in range(solves):
        g = rng.uniform(-1, 1, space.n)
        t0 = time.perf_counter()
        sol = solve_resolvent(ResolventProblem(space, integrand, g, 1.0), backend=backend)
        total += time.perf_counter() - t0
        iters += sol.iterations
    return total, iters


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 100, 1000])
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--solves", type=int, default=20)
    ap.add_argument("--solve-size", type=int, default=6)
    args = ap.parse_args()

    if BACKEND != "cython":
        raise SystemExit("compiled kernel not available; rebuild with `pip install -e . --no-build-isolation`")

    print(f"{'integrand':<10} {'n':>6} {'edges':>7} {'cython it/s':>13} {'numpy it/s':>13} {'speedup':>8}")
    for spec in SPECS:
        I = parse_integrand(spec)
        for n in args.sizes:
            space = random_graph(n, n, density=min(0.4, 8.0 / n))
            c = kernel_rate(space, I, "cython", args.iters)
            p = kernel_rate(space, I, "python", args.iters)
            print(f"{spec:<10} {n:>6} {space.n_edges:>7} {c:>13.0f} {p:>13.0f} {c / p:>7.1f}x")

    print()
    print(f"{args.solves} certified solves per integrand, n={args.solve_size}, tau=1")
    print(f"{'integrand':<10} {'iterations':>11} {'cython s':>10} {'numpy s':>10} {'speedup':>8}")
    space = random_graph(args.solve_size, 7)
    for spec in SPECS:
        I = parse_integrand(spec)
        tc, it = solve_time(space, I, "cython", args.solves)
        tp, _ = solve_time(space, I, "python", args.solves)
        print(f"{spec:<10} {it:>11} {tc:>10.3f} {tp:>10.3f} {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
