"""World-frame spatio-temporal raster, motion features and pose refinement.

Unlike the size branch, points stay in world coordinates so the raster keeps
the true displacement between frames; time becomes extra channels.  A UNet
over per-frame motion deltas supplies temporal context, and an MLP decodes a
per-detection pose correction expressed in box-size-normalized object-frame
offsets.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from auto4d import kernels
from auto4d.geometry import Pose2D, wrap_angle
from auto4d.nn import MLP, Conv2dLayer, ParamSet, Tensor, UNet1d, avg_pool2d, bilinear_query, concat
from auto4d.size_branch import BEVGrid, BOX_SCALE, feature_coords
from auto4d.smoothing import kalman_smooth
from auto4d.trajectory import Detection, Trajectory

PATH_CELL = 0.1
# 10 frames at the 9.5 m/s speed cap span ~13.8 m including the box ends;
# 19.2 m keeps every windowed detection well inside the raster
PATH_WINDOW_M = 19.2
PATH_STRIDE = 4
WINDOW_FRAMES = 10
WINDOW_STEP = 5
HEIGHT_BINS = 4
HEIGHT_MAX = 3.0
MOTION_CHANNELS = 32


@dataclass
class PathObservation:
    """World-frame points with timestamps, restricted to a frame window."""

    points: np.ndarray  # (N, 4) world x, y, z, t
    frames: np.ndarray  # (N,) source frame index
    window: tuple  # ordered frame indices the observation covers
    traj_id: int

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0


@dataclass
class PoseDelta:
    dx: float  # fraction of box length, along heading
    dy: float  # fraction of box width, across heading
    dtheta: float  # radians

    def finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.dx, self.dy, self.dtheta))


def build_path_observation(log, traj: Trajectory, window=None) -> PathObservation:
    """Interior points of each windowed detection, kept in world coords."""
    if window is None:
        window = [d.frame_idx for d in traj.detections]
    window = tuple(window)
    if not window:
        raise ValueError("empty frame window")
    wanted = set(window)
    sweeps = {s.frame_idx: s for s in log.sweeps}
    chunks = []
    frames = []
    for det in traj.detections:
        if det.frame_idx not in wanted:
            continue
        sweep = sweeps.get(det.frame_idx)
        if sweep is None or sweep.points.shape[0] == 0:
            continue
        pts = sweep.points
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
            chunks.append(inside)
            frames.append(np.full(inside.shape[0], det.frame_idx, dtype=np.int64))
    if not chunks:
        return PathObservation(np.zeros((0, 4)), np.zeros(0, dtype=np.int64), window, traj.id)
    return PathObservation(np.vstack(chunks), np.concatenate(frames), window, traj.id)


def rasterize_path(
    obs: PathObservation,
    center_xy,
    window_size: int = WINDOW_FRAMES,
    cell_size: float = PATH_CELL,
    window_m: float = PATH_WINDOW_M,
    height_bins: int = HEIGHT_BINS,
    height_max: float = HEIGHT_MAX,
) -> BEVGrid:
    """World-aligned binary raster; channel = time slot x height bin.

    The window is centered at center_xy (normally the windowed detections'
    centroid).  Channel layout is time-major: slot k occupies channels
    [k*height_bins, (k+1)*height_bins).  Slots past the observation's window
    stay empty so short trajectories still fill a fixed channel count.
    """
    if len(obs.window) > window_size:
        raise ValueError(
            f"observation spans {len(obs.window)} frames, raster holds {window_size}")
    n_cells = int(round(window_m / cell_size))
    half = window_m / 2.0
    data = np.zeros((height_bins * window_size, n_cells, n_cells))
    slot_of = {f: k for k, f in enumerate(obs.window)}
    dropped = 0
    pts = obs.points
    if pts.shape[0]:
        ix = np.floor((pts[:, 0] - center_xy[0] + half) / cell_size).astype(np.int64)
        iy = np.floor((pts[:, 1] - center_xy[1] + half) / cell_size).astype(np.int64)
        keep = (ix >= 0) & (ix < n_cells) & (iy >= 0) & (iy < n_cells)
        dropped = int((~keep).sum())
        iz = np.clip(
            np.floor(pts[keep, 2] / (height_max / height_bins)).astype(np.int64),
            0,
            height_bins - 1,
        )
        slots = np.array([slot_of[f] for f in obs.frames[keep]], dtype=np.int64)
        data[slots * height_bins + iz, iy[keep], ix[keep]] = 1.0
    origin = (
        center_xy[0] - half + cell_size / 2.0,
        center_xy[1] - half + cell_size / 2.0,
    )
    return BEVGrid(data, cell_size, origin, dropped)


def motion_features(traj: Trajectory) -> np.ndarray:
    """(T, 3) rows of (dx, dy, wrapped dtheta) between consecutive frames.

    The first row is zero: there is no previous detection to difference
    against.
    """
    if len(traj) == 0:
        raise ValueError("trajectory has no detections")
    out = np.zeros((len(traj), 3))
    dets = traj.detections
    for i in range(1, len(dets)):
        out[i, 0] = dets[i].pose.x - dets[i - 1].pose.x
        out[i, 1] = dets[i].pose.y - dets[i - 1].pose.y
        out[i, 2] = wrap_angle(dets[i].pose.theta - dets[i - 1].pose.theta)
    return out


class PathEncoder:
    """Size-branch topology, wider first block, one fewer downsample.

    Stride 4 overall: 256x256 in, 64x64 out with 64 channels.  The extra
    time channels motivate the wider entry block.
    """

    def __init__(self, rng, c_in: int, prefix: str = "path_enc"):
        self.prefix = prefix
        spec = [
            (c_in, 32, 1), (32, 32, 1),
            (32, 32, 1), (32, 32, 2),
            (32, 64, 2), (64, 64, 4),
        ]
        self.convs = [
            Conv2dLayer(rng, ci, co, k=3, padding=d, dilation=d)
            for ci, co, d in spec
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, conv in enumerate(self.convs):
            if i in (0, 2):
                x = avg_pool2d(x, 2)
            x = conv(x).relu()
        return x

    def params(self):
        out = {}
        for i, conv in enumerate(self.convs):
            out[f"{self.prefix}.{i}.w"] = conv.w
            out[f"{self.prefix}.{i}.b"] = conv.b
        return out


def apply_pose_refinement(det: Detection, delta: PoseDelta, literal_eq7: bool = False) -> Detection:
    """Move one detection by a pose delta; the size never changes.

    Default form converts the normalized offsets to meters with the box
    dimensions and applies them in the heading frame.  literal_eq7 instead
    multiplies the world coordinates, which ties the step size to the
    distance from the world origin.
    """
    if not delta.finite():
        raise ValueError("pose delta must be finite")
    p = det.pose
    if literal_eq7:
        new = Pose2D(
            (1.0 + delta.dx) * p.x,
            (1.0 + delta.dy) * p.y,
            wrap_angle(p.theta + delta.dtheta),
        )
    else:
        ox = delta.dx * det.size.l
        oy = delta.dy * det.size.w
        c, s = math.cos(p.theta), math.sin(p.theta)
        new = Pose2D(
            p.x + ox * c - oy * s,
            p.y + ox * s + oy * c,
            wrap_angle(p.theta + delta.dtheta),
        )
    return replace(det, pose=new)


def classify_static(
    traj: Trajectory,
    threshold: float = 1.0,
    q_pos: float = 0.05,
    r_pos: float = 0.15,
) -> bool:
    """Static iff the smoothed path length stays under the threshold.

    Smoothing uses a deliberately stiff process noise so measurement jitter
    on a parked vehicle does not accumulate into fake path length.
    """
    if len(traj) < 2:
        return 0.0 < threshold
    sm = kalman_smooth(traj, q_pos=q_pos, r_pos=r_pos)
    xy = np.array([[d.pose.x, d.pose.y] for d in sm.detections])
    steps = np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))
    return float(steps.sum()) < threshold


class PathModel:
    """Raster encoder + motion UNet + decode head for pose refinement.

    The head's output layer starts at zero so an untrained model is the
    identity refinement.
    """

    def __init__(self, seed: int = 0, window: int = WINDOW_FRAMES):
        rng = np.random.default_rng([0xA4D, seed, 21])
        self.window = window
        self.encoder = PathEncoder(rng, HEIGHT_BINS * window)
        self.unet = UNet1d(3, MOTION_CHANNELS, rng, prefix="path_unet")
        self.head = MLP([64 + MOTION_CHANNELS, 64, 3], rng, prefix="path_head")
        self.head.zero_output_layer()
        self.params = ParamSet()
        for name, t in {
            **self.encoder.params(),
            **self.unet.params(),
            **self.head.params(),
        }.items():
            self.params.add(name, t)

    def temporal_encode(self, seq: np.ndarray) -> Tensor:
        """(T, 3) motion rows -> (MOTION_CHANNELS, T) feature tensor.

        The UNet needs a length divisible by 4; zero padding on the right is
        cropped off afterwards.
        """
        seq = np.asarray(seq, dtype=np.float64)
        t = seq.shape[0]
        padded = -t % 4
        x = seq.T
        if padded:
            x = np.concatenate([x, np.zeros((3, padded))], axis=1)
        out = self.unet(Tensor(x))
        if padded:
            out = out[:, :t]
        return out

    def decode_graph(self, f_path: Tensor, grid: BEVGrid, f_motion: Tensor,
                     seq_index: int, det: Detection):
        """Differentiable (dx, dy, dtheta) scalars for one detection."""
        fx, fy = feature_coords(grid, (det.pose.x, det.pose.y), PATH_STRIDE)
        _, fh, fw = f_path.shape
        if not (0.0 <= fx <= fw - 1 and 0.0 <= fy <= fh - 1):
            raise ValueError("detection center outside the raster window")
        q = bilinear_query(f_path, np.array([fx, fy]))
        h = concat([q, f_motion[:, seq_index]])
        out = self.head(h)
        return out[0], out[1], out[2]

    def decode_window(self, log, traj: Trajectory, lo: int, hi: int, f_motion: Tensor):
        """Decode every detection in traj[lo:hi] against one shared raster."""
        dets = traj.detections[lo:hi]
        frames = [d.frame_idx for d in dets]
        obs = build_path_observation(log, traj, frames)
        center = (
            float(np.mean([d.pose.x for d in dets])),
            float(np.mean([d.pose.y for d in dets])),
        )
        grid = rasterize_path(obs, center, window_size=self.window)
        feat = self.encoder(Tensor(grid.data))
        out = []
        for off, det in enumerate(dets):
            trip = self.decode_graph(feat, grid, f_motion, lo + off, det)
            out.append((lo + off, det, trip))
        return out

    def refine_trajectory(
        self,
        log,
        traj: Trajectory,
        window: int = None,
        stride: int = WINDOW_STEP,
        static=None,
        static_threshold: float = 1.0,
        literal_eq7: bool = False,
    ) -> Trajectory:
        """Sliding-window refinement; static objects broadcast one pose.

        Overlapping windows average their per-frame deltas before a single
        application.  The static path decodes only the best-scored frame and
        copies the refined pose everywhere.
        """
        if window is None:
            window = self.window
        t_len = len(traj)
        if t_len == 0:
            raise ValueError("trajectory has no detections")
        if static is None:
            if traj.static_flag is not None:
                static = traj.static_flag
            else:
                static = classify_static(traj, static_threshold)
        f_motion = self.temporal_encode(motion_features(traj))

        if static:
            scores = [d.score for d in traj.detections]
            k = int(np.argmax(scores))
            lo = min(max(0, k - window // 2), max(0, t_len - window))
            hi = min(t_len, lo + window)
            decoded = self.decode_window(log, traj, lo, hi, f_motion)
            _, det_k, trip = decoded[k - lo]
            delta = PoseDelta(*(float(v.data) for v in trip))
            pose = apply_pose_refinement(det_k, delta, literal_eq7).pose
            dets = [replace(d, pose=pose) for d in traj.detections]
            return Trajectory(traj.id, dets, True)

        if t_len <= window:
            starts = [0]
        else:
            starts = list(range(0, t_len - window + 1, stride))
            if starts[-1] != t_len - window:
                starts.append(t_len - window)
        acc = np.zeros((t_len, 3))
        hits = np.zeros(t_len, dtype=np.int64)
        for lo in starts:
            hi = min(t_len, lo + window)
            for pos, _, trip in self.decode_window(log, traj, lo, hi, f_motion):
                acc[pos] += [float(v.data) for v in trip]
                hits[pos] += 1
        acc /= np.maximum(hits, 1)[:, None]
        dets = [
            apply_pose_refinement(d, PoseDelta(*acc[i]), literal_eq7)
            for i, d in enumerate(traj.detections)
        ]
        return Trajectory(traj.id, dets, False)

    def save(self, path):
        self.params.save(path)

    def load(self, path):
        self.params.load_state(path)
