"""Point-scan throughput: compiled kernel versus the numpy tree walk.

    python3 benchmarks/bench_scan.py [--n 1000000] [--repeat 5] [--threads 1]

Prints one line per QoI with the best time of each backend, the speedup and
whether both backends agree bit for bit.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from proqoi import GE_VARIABLES, CompiledQoi, available_backends, builtin_ge_qois, parse_qoi
from proqoi.harness import synth


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    if "cython" not in available_backends():
        print("compiled kernel not built; only the numpy backend is available", file=sys.stderr)
        return 1
    values = [v.values for v in synth("sinusoid-mix", args.n, seed=7)]
    bounds = [1e-3 * float(np.ptp(v)) for v in values]
    qois = dict(builtin_ge_qois())
    qois["V2"] = parse_qoi("Vx^2 + Vy^2 + Vz^2", GE_VARIABLES)
    qois["Q"] = parse_qoi("Vx / D", GE_VARIABLES)

    print(f"n={args.n} threads={args.threads} repeat={args.repeat}")
    print(f"{'qoi':6s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    for name, expr in qois.items():
        comp = CompiledQoi(expr)
        t_np, (v_np, b_np) = best_time(
            lambda: comp.scan(values, bounds, backend="numpy", threads=args.threads), args.repeat)
        t_cy, (v_cy, b_cy) = best_time(
            lambda: comp.scan(values, bounds, backend="cython", threads=args.threads), args.repeat)
        same = np.array_equal(v_np, v_cy, equal_nan=True) and np.array_equal(b_np, b_cy, equal_nan=True)
        print(f"{name:6s} {1e3 * t_np:10.2f} {1e3 * t_cy:10.2f} {t_np / t_cy:8.2f}  {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
