"""Distance-gated frame-to-frame tracker built on Hungarian assignment."""

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from auto4d.trajectory import Trajectory


def hungarian_match(cost):
    """Minimum-cost one-to-one assignment on an n x m matrix.

    math.inf entries mark forbidden pairs.  Maximizes the number of allowed
    matches first, then minimizes total cost (big-M reduction).  Returns
    (pairs, unmatched_rows, unmatched_cols) with pairs sorted by row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n, m = cost.shape
    if n == 0 or m == 0:
        return [], list(range(n)), list(range(m))
    finite = np.isfinite(cost)
    if np.any(np.isnan(cost)):
        raise ValueError("cost entries must be finite or inf")
    if finite.any():
        span = float(np.abs(cost[finite]).max()) + 1.0
    else:
        span = 1.0
    big = span * (n + m + 1)
    work = np.where(finite, cost, big)
    rows, cols = linear_sum_assignment(work)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if finite[r, c]]
    matched_r = {r for r, _ in pairs}
    matched_c = {c for _, c in pairs}
    unmatched_rows = [r for r in range(n) if r not in matched_r]
    unmatched_cols = [c for c in range(m) if c not in matched_c]
    return sorted(pairs), unmatched_rows, unmatched_cols


def track(frames, gate_distance: float = 2.0):
    """Associate per-frame detections into trajectories by center distance.

    `frames` is a list (time order) of detection lists.  Pairs farther than
    gate_distance are forbidden; unmatched detections open new tracks and
    unmatched tracks terminate for good (no re-identification).
    """
    if gate_distance <= 0.0:
        raise ValueError("gate_distance must be positive")
    finished = []
    active = []  # (traj_id, [detections])
    next_id = 0
    for dets in frames:
        dets = list(dets)
        if active and dets:
            cost = np.full((len(active), len(dets)), math.inf)
            for i, (_, owned) in enumerate(active):
                last = owned[-1]
                for j, d in enumerate(dets):
                    dist = math.hypot(
                        d.pose.x - last.pose.x, d.pose.y - last.pose.y
                    )
                    if dist <= gate_distance:
                        cost[i, j] = dist
            pairs, un_rows, un_cols = hungarian_match(cost)
        else:
            pairs = []
            un_rows = list(range(len(active)))
            un_cols = list(range(len(dets)))
        for i, j in pairs:
            active[i][1].append(dets[j])
        survivors = [active[i] for i, _ in pairs]
        for i in un_rows:
            finished.append(active[i])
        active = survivors
        for j in un_cols:
            active.append((next_id, [dets[j]]))
            next_id += 1
    finished.extend(active)
    finished.sort(key=lambda item: item[0])
    return [Trajectory(tid, owned) for tid, owned in finished]
