"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from burgers_lab import kernels
from burgers_lab.field import SpatialGrid, forced_potential

POT = forced_potential()


def cases():
    g = SpatialGrid(256)
    u0 = np.sin(g.nodes)
    q = np.linspace(0, 2 * np.pi, 64)
    p = np.zeros(64)
    slices = np.sin(g.nodes[None, :] + np.linspace(0, 2 * np.pi, 129)[:, None])
    x0 = np.linspace(0, 2 * np.pi, 32)
    return {
        "el_flow (64 orbits, 6283 steps)":
            lambda ff: kernels.el_flow(POT, q, p, 0.0, 1e-3, 6283, force_fallback=ff),
        "el_flow + tangent":
            lambda ff: kernels.el_flow(POT, q, p, 0.0, 1e-3, 6283, True, force_fallback=ff),
        "el_path (one orbit, 12566 steps)":
            lambda ff: kernels.el_path(POT, 0.0, 0.0, 0.0, 1e-3, 12566, force_fallback=ff),
        "fv_advance (n=256, 10 time units)":
            lambda ff: kernels.fv_advance(POT, u0, 0.0, 10.0, g.dx, 0.5, force_fallback=ff),
        "trace (32 paths, 4000 steps)":
            lambda ff: kernels.trace(slices, 0.0, 2 * np.pi / 128, 2 * np.pi, g.dx, x0, 0.0,
                                     -1.0, 0.01, 4000, force_fallback=ff),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"backend: {kernels.backend_name()}")
    print(f"{'kernel':40s} {'compiled s':>11s} {'numpy s':>10s} {'speedup':>8s}")
    for name, fn in cases().items():
        fast = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat))
        slow = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat))
        print(f"{name:40s} {fast:11.4f} {slow:10.4f} {slow / fast:8.1f}")


if __name__ == "__main__":
    main()
