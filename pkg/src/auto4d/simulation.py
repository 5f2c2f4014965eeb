"""Synthetic driving scenes: bicycle-model motion, BEV LiDAR, detection noise.

The simulator produces ground-truth 4D labels (fixed size per vehicle plus a
pose per frame) and a noisy initialization whose error structure mirrors a
real LiDAR detector: sizes are biased toward the visible extent, boxes stay
anchored at the ego-facing corner, pose noise grows with range.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from auto4d import kernels
from auto4d.geometry import (
    BoxBEV,
    Pose2D,
    Size2D,
    box_iou_bev,
    center_align_resize,
    corner_align_resize,
)
from auto4d.trajectory import Detection, Trajectory


@dataclass
class VehicleSpec:
    id: int
    size: Size2D
    height: float
    init_pose: Pose2D
    motion_profile: np.ndarray  # (>= n_frames-1, 2) rows of (speed m/s, steering rad)
    static_flag: bool
    wheelbase: float = 2.8


@dataclass
class Sweep:
    frame_idx: int
    t: float
    ego_pose: Pose2D
    points: np.ndarray  # (N, 4) world-frame x, y, z, t
    source: Optional[np.ndarray] = None  # (N,) emitting vehicle id, in-memory only


@dataclass
class NoiseConfig:
    pos_sigma_base: float = 0.04
    pos_sigma_range_coef: float = 0.004
    theta_sigma: float = 0.015
    size_shrink_mean: float = 0.93
    size_shrink_sigma: float = 0.55
    size_shrink_track_sigma: float = 0.0
    corner_bias_strength: float = 0.85
    drop_rate: float = 0.03
    false_positive_rate: float = 0.0
    score_bias: float = 1.0
    score_point_coef: float = 0.35
    score_range_coef: float = 0.05

    def __post_init__(self):
        for name in ("pos_sigma_base", "pos_sigma_range_coef", "theta_sigma",
                     "size_shrink_sigma", "size_shrink_track_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("corner_bias_strength", "drop_rate", "false_positive_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    def to_obj(self):
        return dict(self.__dict__)

    @classmethod
    def from_obj(cls, obj):
        return cls(**obj)


@dataclass
class SimConfig:
    n_frames: int = 250
    dt: float = 0.1
    ego_speed: float = 8.0
    n_vehicles_min: int = 8
    n_vehicles_max: int = 20
    static_fraction_min: float = 0.3
    static_fraction_max: float = 0.5
    max_range: float = 75.0
    angular_resolution: float = 2.0 * math.pi / 2048.0
    vertical_resolution: float = 0.0073
    range_sigma: float = 0.02
    vehicles: Optional[list] = None  # explicit VehicleSpec list overrides generation

    def digest(self) -> str:
        obj = {k: v for k, v in self.__dict__.items() if k != "vehicles"}
        obj["explicit_vehicles"] = self.vehicles is not None and len(self.vehicles)
        blob = json.dumps(obj, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_obj(self):
        return {k: v for k, v in self.__dict__.items() if k != "vehicles"}

    @classmethod
    def from_obj(cls, obj):
        return cls(**{k: v for k, v in obj.items() if k in cls.__dataclass_fields__})


@dataclass
class SceneLog:
    sweeps: list
    gt_trajectories: list
    seed: int
    config_digest: str
    config: Optional[SimConfig] = None
    ego_poses: Optional[np.ndarray] = None  # (F, 3)
    vehicles: Optional[list] = None


def _integrate_unicycle(x, y, theta, profile, wheelbase, dt, n_frames):
    """Forward-Euler kinematic bicycle; returns (n_frames, 3) poses."""
    out = np.empty((n_frames, 3))
    for k in range(n_frames):
        out[k] = (x, y, theta)
        if k == n_frames - 1:
            break
        speed, steer = profile[k]
        x += speed * math.cos(theta) * dt
        y += speed * math.sin(theta) * dt
        theta += speed * math.tan(steer) / wheelbase * dt
    return out


def integrate_vehicle(spec: VehicleSpec, n_frames: int, dt: float) -> np.ndarray:
    if spec.static_flag:
        return np.tile(
            [spec.init_pose.x, spec.init_pose.y, spec.init_pose.theta], (n_frames, 1)
        )
    profile = np.asarray(spec.motion_profile, dtype=np.float64)
    if profile.shape[0] < n_frames - 1:
        raise ValueError("motion profile shorter than the scene")
    return _integrate_unicycle(
        spec.init_pose.x, spec.init_pose.y, spec.init_pose.theta,
        profile, spec.wheelbase, dt, n_frames,
    )


def _generate_vehicles(cfg: SimConfig, rng: np.random.Generator) -> list:
    """Parked vehicles hug the ego corridor; movers run in outer lanes.

    Static objects end up close to the sensor (dense, well-observed), moving
    ones persist at mid range where pose noise is larger.
    """
    n = int(rng.integers(cfg.n_vehicles_min, cfg.n_vehicles_max + 1))
    frac = rng.uniform(cfg.static_fraction_min, cfg.static_fraction_max)
    n_static = min(max(int(round(n * frac)), 1), n - 1) if n >= 2 else n
    ego_len = cfg.ego_speed * cfg.n_frames * cfg.dt
    steps = max(cfg.n_frames - 1, 1)
    vehicles = []
    vid = 0

    def draw_size():
        w = rng.uniform(1.8, 2.1)
        length = rng.uniform(4.3, 5.2)
        h = rng.uniform(1.45, 1.85)
        return Size2D(w, length), h

    placed = []

    def clear_of_others(pose, size):
        box = BoxBEV(pose, size)
        return all(box_iou_bev(box, other) == 0.0 for other in placed)

    for _ in range(n_static):
        for _attempt in range(50):
            side = 1.0 if rng.uniform() < 0.5 else -1.0
            y = side * rng.uniform(3.5, 8.5)
            x = rng.uniform(5.0, ego_len + 10.0)
            theta = rng.normal(0.0, 0.12)
            size, h = draw_size()
            pose = Pose2D(x, y, theta)
            if clear_of_others(pose, size):
                break
        else:
            continue
        placed.append(BoxBEV(pose, size))
        vehicles.append(
            VehicleSpec(
                id=vid, size=size, height=h, init_pose=pose,
                motion_profile=np.zeros((steps, 2)), static_flag=True,
                wheelbase=0.6 * size.l,
            )
        )
        vid += 1

    lanes = [(-10.5, 1.0), (-14.5, 1.0), (10.5, -1.0), (14.5, -1.0)]
    lane_speed = {i: rng.uniform(4.5, 9.5) for i in range(len(lanes))}
    for _ in range(n - n_static):
        for _attempt in range(50):
            li = int(rng.integers(0, len(lanes)))
            lane_y, direction = lanes[li]
            x = rng.uniform(-20.0, ego_len + 30.0)
            theta = 0.0 if direction > 0 else math.pi
            size, h = draw_size()
            pose = Pose2D(x, lane_y, theta)
            if clear_of_others(pose, size):
                break
        else:
            continue
        placed.append(BoxBEV(pose, size))
        speed = lane_speed[li]
        amp = rng.uniform(0.0, 0.005)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        tt = np.arange(steps) * cfg.dt
        profile = np.column_stack(
            [np.full(steps, speed), amp * np.sin(2.0 * math.pi * 0.1 * tt + phase)]
        )
        vehicles.append(
            VehicleSpec(
                id=vid, size=size, height=h, init_pose=pose,
                motion_profile=profile, static_flag=False,
                wheelbase=0.6 * size.l,
            )
        )
        vid += 1
    return vehicles


def _check_initial_overlap(vehicles):
    for i in range(len(vehicles)):
        for j in range(i + 1, len(vehicles)):
            a = BoxBEV(vehicles[i].init_pose, vehicles[i].size)
            b = BoxBEV(vehicles[j].init_pose, vehicles[j].size)
            if box_iou_bev(a, b) > 0.0:
                raise ValueError(
                    f"vehicles {vehicles[i].id} and {vehicles[j].id} overlap at t=0"
                )


def lidar_sample(
    state,
    ego_pose: Pose2D,
    angular_resolution: float,
    max_range: float,
    seed,
    range_sigma: float = 0.0,
    vertical_resolution: float = 0.0073,
    frame_idx: int = 0,
    t: float = 0.0,
) -> Sweep:
    """Cast rays over [0, 2pi) against box edges; nearest hit wins (occlusion).

    `state` is a list of (vehicle_id, BoxBEV, height).  Each BEV hit becomes
    a small column of 3D points whose count shrinks with range, emulating a
    spinning multi-beam sensor.
    """
    if angular_resolution <= 0.0:
        raise ValueError("angular_resolution must be positive")
    rng = np.random.default_rng(seed)
    angles = np.arange(0.0, 2.0 * math.pi, angular_resolution)
    if not state:
        empty = np.zeros((0, 4))
        return Sweep(frame_idx, t, ego_pose, empty, np.zeros(0, dtype=np.int64))
    segs = np.empty((4 * len(state), 4))
    vids = np.empty(len(state), dtype=np.int64)
    heights = np.empty(len(state))
    for i, (vid, box, h) in enumerate(state):
        corners = kernels.box_corners(
            box.pose.x, box.pose.y, box.pose.theta, box.size.w, box.size.l
        )
        nxt = np.roll(corners, -1, axis=0)
        segs[4 * i:4 * i + 4, 0:2] = corners
        segs[4 * i:4 * i + 4, 2:4] = nxt
        vids[i] = vid
        heights[i] = h
    dist, hit = kernels.raycast(ego_pose.x, ego_pose.y, angles, segs, max_range)
    mask = hit >= 0
    if not np.any(mask):
        return Sweep(frame_idx, t, ego_pose, np.zeros((0, 4)), np.zeros(0, dtype=np.int64))
    r = dist[mask]
    a = angles[mask]
    obj = hit[mask] // 4
    h_hit = heights[obj]
    n_z = np.clip(np.round(h_hit / (r * vertical_resolution)), 1, 8).astype(np.int64)
    total = int(n_z.sum())
    rep_r = np.repeat(r, n_z) + rng.normal(0.0, range_sigma, total)
    rep_r = np.clip(rep_r, 0.05, max_range)
    rep_a = np.repeat(a, n_z)
    rep_h = np.repeat(h_hit, n_z)
    xs = ego_pose.x + rep_r * np.cos(rep_a)
    ys = ego_pose.y + rep_r * np.sin(rep_a)
    zs = rng.uniform(0.0, 1.0, total) * rep_h
    pts = np.column_stack([xs, ys, zs, np.full(total, t)])
    source = np.repeat(vids[obj], n_z)
    return Sweep(frame_idx, t, ego_pose, pts, source)


def simulate_scene(config: Optional[SimConfig] = None, seed: int = 0) -> SceneLog:
    cfg = config if config is not None else SimConfig()
    if cfg.n_frames < 2:
        raise ValueError("need at least 2 frames")
    rng = np.random.default_rng([0xA4D, seed])
    steps = cfg.n_frames - 1
    ego_profile = np.column_stack([np.full(steps, cfg.ego_speed), np.zeros(steps)])
    ego_poses = _integrate_unicycle(0.0, 0.0, 0.0, ego_profile, 2.8, cfg.dt, cfg.n_frames)

    if cfg.vehicles is not None:
        vehicles = cfg.vehicles
    else:
        vehicles = _generate_vehicles(cfg, rng)
    if not vehicles:
        raise ValueError("config has no vehicles")
    _check_initial_overlap(vehicles)

    tracks = {v.id: integrate_vehicle(v, cfg.n_frames, cfg.dt) for v in vehicles}
    sweeps = []
    counts = {v.id: np.zeros(cfg.n_frames, dtype=np.int64) for v in vehicles}
    for k in range(cfg.n_frames):
        ego = Pose2D(ego_poses[k, 0], ego_poses[k, 1], ego_poses[k, 2])
        state = []
        for v in vehicles:
            px, py, pth = tracks[v.id][k]
            state.append((v.id, BoxBEV(Pose2D(px, py, pth), v.size), v.height))
        sweep = lidar_sample(
            state, ego, cfg.angular_resolution, cfg.max_range,
            seed=[0xA4D, seed, 1, k],
            range_sigma=cfg.range_sigma,
            vertical_resolution=cfg.vertical_resolution,
            frame_idx=k, t=k * cfg.dt,
        )
        sweeps.append(sweep)
        if sweep.source is not None and sweep.source.size:
            ids, per = np.unique(sweep.source, return_counts=True)
            for vid, cnt in zip(ids, per):
                counts[int(vid)][k] = cnt

    gt = []
    for v in vehicles:
        dets = []
        for k in range(cfg.n_frames):
            px, py, pth = tracks[v.id][k]
            ego = sweeps[k].ego_pose
            rng_dist = math.hypot(px - ego.x, py - ego.y)
            if counts[v.id][k] >= 1 or rng_dist <= cfg.max_range:
                dets.append(
                    Detection(
                        pose=Pose2D(px, py, pth), size=v.size,
                        t=k * cfg.dt, frame_idx=k, score=1.0, gt_id=v.id,
                    )
                )
        if dets:
            gt.append(Trajectory(v.id, dets, v.static_flag))

    return SceneLog(
        sweeps=sweeps,
        gt_trajectories=gt,
        seed=seed,
        config_digest=cfg.digest(),
        config=cfg,
        ego_poses=ego_poses,
        vehicles=vehicles,
    )


def scene_point_counts(scene: SceneLog) -> dict:
    """vehicle id -> {frame -> emitted point count} from the sweep source tags."""
    out = {}
    for sweep in scene.sweeps:
        if sweep.source is None or sweep.source.size == 0:
            continue
        ids, per = np.unique(sweep.source, return_counts=True)
        for vid, cnt in zip(ids, per):
            out.setdefault(int(vid), {})[sweep.frame_idx] = int(cnt)
    return out


def _score(noise: NoiseConfig, n_points: float, rng_dist: float) -> float:
    z = (
        noise.score_bias
        + noise.score_point_coef * math.log1p(max(n_points, 0.0))
        - noise.score_range_coef * rng_dist
    )
    return 1.0 / (1.0 + math.exp(-z))


def _shrink_skew(rng):
    # zero-mean but right-skewed: normal core plus a centered lognormal tail
    return rng.normal() + 0.5 * (rng.lognormal(-0.5, 1.0) - 1.0)


def inject_detection_noise(
    gt: Trajectory,
    noise: NoiseConfig,
    ego_poses,
    seed,
    point_counts: Optional[dict] = None,
) -> Trajectory:
    """Corner-preserving detector noise on one ground-truth trajectory.

    ego_poses indexes Pose2D by frame (list or dict).  Per frame the size
    shrinks by a single factor (both dimensions), the shrunken box re-anchors
    at the ego-closest gt corner with probability corner_bias_strength, and
    the pose gets range-scaled Gaussian noise.  size_shrink_track_sigma adds
    a shrink component drawn once per trajectory, so the same object is
    mis-sized consistently across frames.  Deterministic in (seed, id).
    """
    rng = np.random.default_rng([0xA4D, seed, 2, gt.id])
    deficit_mean = 1.0 - noise.size_shrink_mean
    track_skew = 0.0
    if noise.size_shrink_track_sigma > 0.0 and deficit_mean > 0.0:
        # persistent per-object bias: the same occlusion pattern shortchanges
        # the same object in every frame it is detected
        track_skew = noise.size_shrink_track_sigma * _shrink_skew(rng)
    out = []
    for det in gt.detections:
        ego = ego_poses[det.frame_idx]
        u_drop = rng.uniform()
        z = track_skew
        if noise.size_shrink_sigma > 0.0 and deficit_mean > 0.0:
            # two-sided but right-skewed: boxes usually come out a bit small,
            # sometimes badly clipped, occasionally oversized
            z += noise.size_shrink_sigma * _shrink_skew(rng)
        deficit = deficit_mean * (1.0 + z)
        f = float(np.clip(1.0 - deficit, 0.5, 1.25))
        new_size = Size2D(det.size.w * f, det.size.l * f)
        u_corner = rng.uniform()
        if u_corner < noise.corner_bias_strength:
            base = corner_align_resize(det.box, new_size, ego)
        else:
            base = center_align_resize(det.box, new_size)
        rng_dist = math.hypot(det.pose.x - ego.x, det.pose.y - ego.y)
        sigma_p = noise.pos_sigma_base + noise.pos_sigma_range_coef * rng_dist
        dx, dy = rng.normal(0.0, sigma_p, 2)
        dth = rng.normal(0.0, noise.theta_sigma)
        if u_drop < noise.drop_rate:
            continue
        if point_counts is not None:
            n_pts = point_counts.get(det.frame_idx, 0)
        else:
            n_pts = 500.0 / max(rng_dist, 1.0)
        out.append(
            Detection(
                pose=Pose2D(base.pose.x + dx, base.pose.y + dy, base.pose.theta + dth),
                size=base.size,
                t=det.t,
                frame_idx=det.frame_idx,
                score=_score(noise, n_pts, rng_dist),
                gt_id=det.gt_id,
            )
        )
    return Trajectory(gt.id, out, gt.static_flag)


def make_initial_labels(scene: SceneLog, noise: NoiseConfig, seed: int) -> list:
    """Noisy per-frame boxes for every gt trajectory plus optional false tracks."""
    egos = [sw.ego_pose for sw in scene.sweeps]
    counts = scene_point_counts(scene)
    out = []
    for traj in scene.gt_trajectories:
        noisy = inject_detection_noise(traj, noise, egos, seed, counts.get(traj.id))
        if len(noisy):
            out.append(noisy)
    if noise.false_positive_rate > 0.0:
        rng = np.random.default_rng([0xA4D, seed, 3])
        next_id = max((t.id for t in scene.gt_trajectories), default=0) + 1
        n_frames = len(scene.sweeps)
        for k in range(n_frames):
            if rng.uniform() >= noise.false_positive_rate:
                continue
            life = int(rng.integers(3, 9))
            ego = egos[k]
            ang = rng.uniform(0.0, 2.0 * math.pi)
            dist = rng.uniform(8.0, 40.0)
            cx, cy = ego.x + dist * math.cos(ang), ego.y + dist * math.sin(ang)
            size = Size2D(rng.uniform(1.7, 2.2), rng.uniform(4.0, 5.5))
            theta = rng.uniform(-math.pi, math.pi)
            dets = []
            for j in range(k, min(k + life, n_frames)):
                jit = rng.normal(0.0, 0.05, 2)
                dets.append(
                    Detection(
                        pose=Pose2D(cx + jit[0], cy + jit[1], theta),
                        size=size,
                        t=scene.sweeps[j].t,
                        frame_idx=j,
                        score=float(rng.uniform(0.15, 0.45)),
                        gt_id=None,
                    )
                )
            out.append(Trajectory(next_id, dets, None))
            next_id += 1
    return out


def fragment_tracks(trajectories, fragment_rate: float, seed):
    """Split tracks at one uniform cut each with the given probability.

    Returns (fragments, provenance) where provenance maps every output id to
    its source trajectory id (identity for unsplit tracks).
    """
    if not 0.0 <= fragment_rate <= 1.0:
        raise ValueError("fragment_rate must be in [0, 1]")
    rng = np.random.default_rng([0xA4D, seed, 4])
    next_id = max((t.id for t in trajectories), default=0) + 1
    out = []
    provenance = {}
    for traj in trajectories:
        if len(traj) >= 2 and rng.uniform() < fragment_rate:
            cut = int(rng.integers(1, len(traj)))
            first = Trajectory(traj.id, traj.detections[:cut], traj.static_flag)
            second = Trajectory(next_id, traj.detections[cut:], traj.static_flag)
            next_id += 1
            out.extend([first, second])
            provenance[first.id] = traj.id
            provenance[second.id] = traj.id
        else:
            out.append(traj)
            provenance[traj.id] = traj.id
    return out, provenance
