#!/usr/bin/env python3
"""Timing comparison of the compiled kernels vs the NumPy reference.

Usage:  python benchmarks/bench_kernels.py [--repeat N]

Reports best-of-N wall time per workload for both backends plus the speedup.
The workloads mirror the hot paths in simulation (raycast), point cropping
(points_in_obb) and evaluation/refinement (box_iou).
"""

import argparse
import time

import numpy as np

from auto4d import _reference

try:
    from auto4d import _native
except ImportError:
    _native = None


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_workloads(mod, rng):
    boxes = np.column_stack(
        [
            rng.uniform(-3, 3, size=(2000, 2)),
            rng.uniform(-np.pi, np.pi, size=(2000, 1)),
            rng.uniform(1.5, 2.5, size=(2000, 1)),
            rng.uniform(3.5, 5.5, size=(2000, 1)),
        ]
    )
    pts = rng.uniform(-40, 40, size=(200_000, 2))
    angles = np.linspace(-np.pi, np.pi, 720, endpoint=False)
    segs = rng.uniform(-30.0, 30.0, size=(200, 4))

    def iou_pairs():
        acc = 0.0
        for i in range(0, 2000, 2):
            acc += mod.box_iou(*boxes[i], *boxes[i + 1])
        return acc

    def crop():
        return mod.points_in_obb(pts, 1.0, -2.0, 0.7, 15.0, 25.0)

    def rays():
        for _ in range(20):
            mod.raycast(0.0, 0.0, angles, segs, 80.0)

    return [("box_iou x1000", iou_pairs), ("points_in_obb 200k", crop), ("raycast 720x200 x20", rays)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if _native is None:
        print("compiled extension not available; nothing to compare")
        return

    rng = np.random.default_rng(0)
    ref_loads = make_workloads(_reference, rng)
    rng = np.random.default_rng(0)
    nat_loads = make_workloads(_native, rng)

    print(f"{'workload':<24}{'reference':>12}{'native':>12}{'speedup':>10}")
    for (name, ref_fn), (_, nat_fn) in zip(ref_loads, nat_loads):
        t_ref = _best_of(ref_fn, args.repeat)
        t_nat = _best_of(nat_fn, args.repeat)
        print(f"{name:<24}{t_ref * 1e3:>10.2f}ms{t_nat * 1e3:>10.2f}ms{t_ref / t_nat:>9.1f}x")


if __name__ == "__main__":
    main()
