"""Detection and trajectory containers plus their JSON wire format.

A trajectory file is a JSON array of objects
``{"id", "static", "frames": [{"frame", "t", "x", "y", "theta", "w", "l",
"score"}, ...]}``.  Angles are radians, lengths meters.  Readers ignore
unknown keys; the simulator adds a per-frame ``gt_id`` so evaluation can
match outputs to source objects without geometric disambiguation.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

from auto4d.geometry import BoxBEV, Pose2D, Size2D


@dataclass
class Detection:
    pose: Pose2D
    size: Size2D
    t: float
    frame_idx: int
    score: float = 1.0
    gt_id: Optional[int] = None

    @property
    def box(self) -> BoxBEV:
        return BoxBEV(self.pose, self.size)


@dataclass
class Trajectory:
    id: int
    detections: list = field(default_factory=list)
    static_flag: Optional[bool] = None

    def __post_init__(self):
        for a, b in zip(self.detections, self.detections[1:]):
            if b.t <= a.t:
                raise ValueError("detections must have strictly increasing t")

    def __len__(self):
        return len(self.detections)

    def frames(self):
        return [d.frame_idx for d in self.detections]

    @staticmethod
    def from_detections(traj_id, detections, static_flag=None):
        return Trajectory(traj_id, sorted(detections, key=lambda d: d.t), static_flag)


def _det_to_obj(d: Detection) -> dict:
    obj = {
        "frame": d.frame_idx,
        "t": d.t,
        "x": d.pose.x,
        "y": d.pose.y,
        "theta": d.pose.theta,
        "w": d.size.w,
        "l": d.size.l,
        "score": d.score,
    }
    if d.gt_id is not None:
        obj["gt_id"] = d.gt_id
    return obj


def _det_from_obj(obj: dict) -> Detection:
    return Detection(
        pose=Pose2D(obj["x"], obj["y"], obj["theta"]),
        size=Size2D(obj["w"], obj["l"]),
        t=obj["t"],
        frame_idx=obj["frame"],
        score=obj.get("score", 1.0),
        gt_id=obj.get("gt_id"),
    )


def traj_to_obj(traj: Trajectory) -> dict:
    return {
        "id": traj.id,
        "static": traj.static_flag,
        "frames": [_det_to_obj(d) for d in traj.detections],
    }


def traj_from_obj(obj: dict) -> Trajectory:
    return Trajectory(
        id=obj["id"],
        detections=[_det_from_obj(f) for f in obj["frames"]],
        static_flag=obj.get("static"),
    )


def save_trajectories(path, trajectories) -> None:
    with open(path, "w") as fh:
        json.dump([traj_to_obj(t) for t in trajectories], fh)


def load_trajectories(path):
    with open(path) as fh:
        data = json.load(fh)
    return [traj_from_obj(obj) for obj in data]
