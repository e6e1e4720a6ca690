"""Compare the compiled and numpy kernel backends on representative workloads.

Usage: python3 bench/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from kubolab import _pykernels

try:
    from kubolab import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def workloads(rng):
    # graphene-like pair sum: 2 * 128^2 pairs, 4 tensor entries, 81 frequencies
    P = 2 * 128 * 128
    x = rng.normal(size=P) * 3
    w = rng.normal(size=(P, 4)) + 1j * rng.normal(size=(P, 4))
    om = np.linspace(0, 4, 81)
    yield "resolvent_sum P=32768 nw=81", (x, w, om, 0.2), "resolvent_sum"
    # ring dynamics: Liouville dim 12, 1024 intervals x 8 phases, ~100 steps each
    n = 12
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    A = 0.2 * (A - A.conj().T)
    a1 = 1j * rng.normal(size=n) * 1e-4
    j = rng.normal(size=(1, n)) + 0j
    c0 = rng.normal(size=n) + 0j
    B = 8192
    taus = rng.exponential(2.5, size=B)
    ns = np.maximum(1, np.ceil(taus / 0.025)).astype(np.int64)
    args = (A, a1, j, c0, np.cumsum(taus), np.tile(np.linspace(-np.pi, np.pi, 8, endpoint=False), B // 8),
            taus / ns, ns, 0.8)
    yield "rk4_liouville n=12 rows=8192", args, "rk4_liouville"
    small = (A, a1, j, c0) + tuple(a[:16] for a in args[4:8]) + (0.8,)
    yield "rk4_liouville n=12 rows=16", small, "rk4_liouville"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    opts = parser.parse_args()
    rng = np.random.default_rng(2024)
    print(f"{'workload':<34s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, args, fn in workloads(rng):
        tp, outp = _best(lambda: getattr(_pykernels, fn)(*args), opts.repeat)
        if _ckernels is None:
            print(f"{name:<34s} {tp:10.4f} {'n/a':>11s}")
            continue
        tc, outc = _best(lambda: getattr(_ckernels, fn)(*args), opts.repeat)
        diff = float(np.max(np.abs(outp - outc)))
        print(f"{name:<34s} {tp:10.4f} {tc:11.4f} {tp / tc:8.2f} {diff:11.2e}")


if __name__ == "__main__":
    main()
