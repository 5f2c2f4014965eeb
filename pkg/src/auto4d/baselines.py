"""Non-learned size selection baselines over a trajectory's detections."""

import numpy as np

from auto4d.geometry import Size2D
from auto4d.trajectory import Trajectory

STRATEGIES = ("random", "mean", "median", "score")


def size_baseline(traj: Trajectory, strategy: str, seed: int = 0) -> Size2D:
    """Collapse per-frame size estimates into a single Size2D.

    random picks one frame with the given seed; mean and median act per
    dimension; score takes the highest-score frame, earliest on ties.
    """
    if len(traj) == 0:
        raise ValueError("trajectory has no detections")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    sizes = np.array([[d.size.w, d.size.l] for d in traj.detections])
    if strategy == "random":
        rng = np.random.default_rng([0xA4D, seed, 7])
        w, l = sizes[int(rng.integers(len(sizes)))]
    elif strategy == "mean":
        w, l = sizes.mean(axis=0)
    elif strategy == "median":
        w, l = np.median(sizes, axis=0)
    else:
        scores = np.array([d.score for d in traj.detections])
        # argmax returns the first maximum, which is the earliest frame
        # because detections are stored in time order
        w, l = sizes[int(np.argmax(scores))]
    return Size2D(float(w), float(l))
