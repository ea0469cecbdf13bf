#!/usr/bin/env python3
"""Benchmark: compiled vs pure-Python grid-search kernel.

Runs the same worst-case-divergence searches through every available
kernel implementation and reports wall time, node counts, and result
agreement.  Usage: python benchmarks/bench_divergence_grid.py [n_cases]
"""

import math
import sys
import time

import numpy as np

from conceptcert import _kernel
from conceptcert.certify import _power_table, _seed_incumbent, k0_of


def prepare_case(rng):
    while True:
        dim = int(rng.integers(4, 7))
        k = int(rng.integers(1, 4))
        beta = float(rng.choice([0.5, 0.67, 1.0]))
        k0 = k0_of(beta, k)
        if k0 <= k and k + k0 <= dim:
            break
    w = rng.dirichlet(np.ones(dim))
    alpha = float(rng.choice([2.0, 4.0]))
    n = 100
    max_overlap = int(math.ceil(beta * k - 1e-9)) - 1
    ws = np.sort(w)[::-1]
    walpha = np.ascontiguousarray(ws**alpha)
    tails = np.concatenate([np.cumsum(ws[::-1])[::-1], [0.0]])
    tail_walpha = np.ascontiguousarray(tails**alpha)
    best0, _ = _seed_incumbent(ws, walpha, k, max_overlap, n, alpha)
    return (
        walpha,
        _power_table(n, alpha),
        tail_walpha,
        k,
        max_overlap,
        n,
        [1] * dim,
        [n] * dim,
        best0,
    )


def main():
    n_cases = int(sys.argv[1]) if len(sys.argv) > 1 else 50
    rng = np.random.default_rng(2024)
    cases = [prepare_case(rng) for _ in range(n_cases)]
    impls = _kernel.available_implementations()
    print(f"active kernel: {_kernel.IMPLEMENTATION}; comparing: {sorted(impls)}")
    results = {}
    for name, impl in sorted(impls.items()):
        t0 = time.perf_counter()
        values = []
        nodes = 0
        for case in cases:
            best, _, visited = impl(*case)
            values.append(best)
            nodes += visited
        elapsed = time.perf_counter() - t0
        results[name] = values
        print(
            f"{name:8s} {elapsed * 1e3:9.1f} ms total "
            f"({elapsed / n_cases * 1e3:7.2f} ms/case, {nodes} nodes)"
        )
    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        worst = max(abs(a - b) for a, b in zip(py, cy))
        print(f"max |python - cython| = {worst:.3e}")


if __name__ == "__main__":
    main()
