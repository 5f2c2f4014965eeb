"""Object-frame point aggregation, BEV rasterization and single-size prediction.

The branch collapses a whole trajectory into one canonical observation:
every frame's interior points expressed in that frame's box coordinates,
stacked.  A small conv encoder reads the raster and an MLP queried at the
object origin emits log-size residuals over a prior.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from auto4d import kernels
from auto4d.geometry import (
    BoxBEV,
    Pose2D,
    Size2D,
    center_align_resize,
    corner_align_resize,
    world_to_object,
)
from auto4d.nn import MLP, Conv2dLayer, ParamSet, Tensor, avg_pool2d, bilinear_query
from auto4d.trajectory import Trajectory

BOX_SCALE = 1.1
CELL_SIZE = 0.05
WINDOW_M = 12.8
HEIGHT_BINS = 4
HEIGHT_MAX = 3.0
ENCODER_STRIDE = 8
SIZE_PRIOR = Size2D(2.0, 4.5)


@dataclass
class ObjectObservation:
    """Aggregated object-frame points with their source frames."""

    points: np.ndarray  # (N, 3) x, y, z in the object frame
    frames: np.ndarray  # (N,) source frame index
    traj_id: int

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0


@dataclass
class BEVGrid:
    data: np.ndarray  # (C, H, W) binary occupancy, C height bins
    cell_size: float
    origin: tuple  # object-frame (x, y) of the center of cell (0, 0)
    dropped: int = 0


def _sweep_index(log):
    return {s.frame_idx: s for s in log.sweeps}


def _interior_object_points(sweep, det):
    """Interior points of the detection's 1.1-scaled box in object coords."""
    pts = sweep.points
    if pts.shape[0] == 0:
        return np.zeros((0, 3))
    mask = kernels.points_in_obb(
        np.ascontiguousarray(pts[:, :2]),
        det.pose.x,
        det.pose.y,
        det.pose.theta,
        0.5 * BOX_SCALE * det.size.w,
        0.5 * BOX_SCALE * det.size.l,
    )
    inside = pts[mask]
    if inside.shape[0] == 0:
        return np.zeros((0, 3))
    return world_to_object(inside[:, :3], det.pose)


def build_object_observation(log, traj: Trajectory) -> ObjectObservation:
    """Stack every frame's interior points, each in its own box frame.

    Points are tested against the detection box scaled by 1.1 so that
    shrink-noised boxes still capture the full object.  Time is dropped.
    """
    if len(traj) == 0:
        raise ValueError("trajectory has no detections")
    sweeps = _sweep_index(log)
    chunks = []
    frames = []
    for det in traj.detections:
        sweep = sweeps.get(det.frame_idx)
        if sweep is None:
            continue
        obj = _interior_object_points(sweep, det)
        if obj.shape[0]:
            chunks.append(obj)
            frames.append(np.full(obj.shape[0], det.frame_idx, dtype=np.int64))
    if not chunks:
        return ObjectObservation(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), traj.id)
    return ObjectObservation(np.vstack(chunks), np.concatenate(frames), traj.id)


def build_object_observation_world(log, traj: Trajectory) -> ObjectObservation:
    """Union per-frame interior points in world coords, align once.

    Requires the trajectory to be flagged static; the single alignment uses
    the pose of the highest-score detection, so per-frame pose noise does not
    blur the aggregate.
    """
    if len(traj) == 0:
        raise ValueError("trajectory has no detections")
    if traj.static_flag is not True:
        raise ValueError("world aggregation requires a static-flagged trajectory")
    sweeps = _sweep_index(log)
    chunks = []
    frames = []
    for det in traj.detections:
        sweep = sweeps.get(det.frame_idx)
        if sweep is None:
            continue
        pts = sweep.points
        if pts.shape[0] == 0:
            continue
        mask = kernels.points_in_obb(
            np.ascontiguousarray(pts[:, :2]),
            det.pose.x,
            det.pose.y,
            det.pose.theta,
            0.5 * BOX_SCALE * det.size.w,
            0.5 * BOX_SCALE * det.size.l,
        )
        inside = pts[mask]
        if inside.shape[0]:
            chunks.append(inside[:, :3])
            frames.append(np.full(inside.shape[0], det.frame_idx, dtype=np.int64))
    if not chunks:
        return ObjectObservation(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), traj.id)
    world = np.vstack(chunks)
    scores = [d.score for d in traj.detections]
    anchor = traj.detections[int(np.argmax(scores))]
    return ObjectObservation(
        world_to_object(world, anchor.pose), np.concatenate(frames), traj.id
    )


def rasterize_bev(
    obs: ObjectObservation,
    cell_size: float = CELL_SIZE,
    window_m: float = WINDOW_M,
    height_bins: int = HEIGHT_BINS,
    height_max: float = HEIGHT_MAX,
) -> BEVGrid:
    """Binary occupancy raster centered on the object origin.

    Height becomes the channel axis (uniform bins over [0, height_max]);
    out-of-window points are dropped and counted, out-of-range heights are
    clamped into the edge bins.
    """
    n_cells = int(round(window_m / cell_size))
    half = window_m / 2.0
    data = np.zeros((height_bins, n_cells, n_cells))
    pts = obs.points
    dropped = 0
    if pts.shape[0]:
        ix = np.floor((pts[:, 0] + half) / cell_size).astype(np.int64)
        iy = np.floor((pts[:, 1] + half) / cell_size).astype(np.int64)
        keep = (ix >= 0) & (ix < n_cells) & (iy >= 0) & (iy < n_cells)
        dropped = int((~keep).sum())
        iz = np.clip(
            np.floor(pts[keep, 2] / (height_max / height_bins)).astype(np.int64),
            0,
            height_bins - 1,
        )
        data[iz, iy[keep], ix[keep]] = 1.0
    origin = (-half + cell_size / 2.0, -half + cell_size / 2.0)
    return BEVGrid(data, cell_size, origin, dropped)


def feature_coords(grid: BEVGrid, xy, stride: int = ENCODER_STRIDE):
    """Feature-map (x, y) coordinates of a metric point on a raster.

    Input cell u is centered at origin + u*cell; a feature cell at stride s
    covers s input cells, its center sitting at input coordinate
    s*f + (s-1)/2.
    """
    ux = (xy[0] - grid.origin[0]) / grid.cell_size
    uy = (xy[1] - grid.origin[1]) / grid.cell_size
    off = (stride - 1) / 2.0
    return ((ux - off) / stride, (uy - off) / stride)


class SizeEncoder:
    """Three conv blocks with stride-2 pooling, dilated late convs.

    Spatial stride 8 overall: 256x256x4 in, 32x32x64 out.  Dilations widen
    the center receptive field to ~6.8 m so a full car length is visible
    from the origin query.
    """

    def __init__(self, rng, c_in: int = HEIGHT_BINS, prefix: str = "size_enc"):
        self.prefix = prefix
        spec = [
            (c_in, 16, 1), (16, 16, 1),
            (16, 32, 1), (32, 32, 2),
            (32, 64, 2), (64, 64, 4),
        ]
        self.convs = [
            Conv2dLayer(rng, ci, co, k=3, padding=d, dilation=d)
            for ci, co, d in spec
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, conv in enumerate(self.convs):
            if i % 2 == 0:
                x = avg_pool2d(x, 2)
            x = conv(x).relu()
        return x

    def params(self):
        out = {}
        for i, conv in enumerate(self.convs):
            out[f"{self.prefix}.{i}.w"] = conv.w
            out[f"{self.prefix}.{i}.b"] = conv.b
        return out


class SizeModel:
    """Encoder plus origin-query MLP head emitting log-size residuals."""

    def __init__(self, seed: int = 0, prior: Size2D = SIZE_PRIOR):
        rng = np.random.default_rng([0xA4D, seed, 20])
        self.prior = prior
        self.encoder = SizeEncoder(rng)
        self.head = MLP([64, 64, 2], rng, prefix="size_head")
        self.params = ParamSet()
        for name, t in {**self.encoder.params(), **self.head.params()}.items():
            self.params.add(name, t)

    def residuals(self, grid: BEVGrid) -> Tensor:
        """Differentiable (log w, log l) residuals for one raster."""
        x = Tensor(grid.data)
        feat = self.encoder(x)
        fx, fy = feature_coords(grid, (0.0, 0.0))
        center = bilinear_query(feat, np.array([fx, fy]))
        return self.head(center)

    def predict(self, grid: BEVGrid) -> Size2D:
        r = self.residuals(grid).data
        return Size2D(
            self.prior.w * math.exp(float(r[0])),
            self.prior.l * math.exp(float(r[1])),
        )

    def size_from_residuals(self, r: Tensor):
        """Residual tensor -> differentiable (w, l) scalar tensors."""
        return (r[0].exp() * self.prior.w, r[1].exp() * self.prior.l)

    def save(self, path):
        self.params.save(path)

    def load(self, path):
        self.params.load_state(path)


def apply_size(
    traj: Trajectory,
    new_size: Size2D,
    strategy: str = "corner",
    ego_poses=None,
) -> Trajectory:
    """Rewrite every detection to the given size.

    corner keeps each frame's ego-closest corner pinned (needs per-frame ego
    poses indexed by frame_idx); center rescales about the box center.
    """
    if new_size.w <= 0.0 or new_size.l <= 0.0:
        raise ValueError("new_size must be positive")
    if strategy not in ("corner", "center"):
        raise ValueError(f"unknown alignment strategy {strategy!r}")
    if strategy == "corner" and ego_poses is None:
        raise ValueError("corner alignment needs ego poses")
    dets = []
    for det in traj.detections:
        box = BoxBEV(det.pose, det.size)
        if strategy == "corner":
            ego = ego_poses[det.frame_idx]
            if not isinstance(ego, Pose2D):
                ego = Pose2D(float(ego[0]), float(ego[1]), float(ego[2]))
            new_box = corner_align_resize(box, new_size, ego)
        else:
            new_box = center_align_resize(box, new_size)
        dets.append(replace(det, pose=new_box.pose, size=new_box.size))
    return Trajectory(traj.id, dets, traj.static_flag)
