"""Sequential two-branch training on simulated scenes.

Both branches minimize the negative log IoU between the refined box and the
gt box.  The size branch trains through the corner alignment so the loss
sees the same resize path used at inference; the path branch trains on the
size-corrected trajectories, mirroring the deployment order.
"""

import math
from dataclasses import dataclass

import numpy as np

from auto4d.geometry import _CORNER_SIGNS, box_corners, closest_corner_index
from auto4d.nn import Adam, iou_loss
from auto4d.path_branch import PathModel, motion_features
from auto4d.size_branch import (
    SizeModel,
    apply_size,
    build_object_observation,
    build_object_observation_world,
    rasterize_bev,
)


@dataclass
class TrainConfig:
    seed: int = 0
    lr: float = 1e-3
    steps: int = 600
    batch: int = 2
    frames_per_traj: int = 6
    window: int = 10
    full_batch: bool = False
    literal_eq7: bool = False
    world_static: bool = False
    train_scenes: tuple = ()
    val_scenes: tuple = ()
    test_scenes: tuple = ()

    def __post_init__(self):
        a, b, c = set(self.train_scenes), set(self.val_scenes), set(self.test_scenes)
        if (a & b) or (a & c) or (b & c):
            raise ValueError("scene splits must be disjoint")


def provenance_id(traj):
    """Majority gt id over the trajectory's detections, None for pure FPs."""
    votes = {}
    for d in traj.detections:
        if d.gt_id is not None:
            votes[d.gt_id] = votes.get(d.gt_id, 0) + 1
    if not votes:
        return None
    return max(votes.items(), key=lambda kv: (kv[1], -kv[0]))[0]


def _pack_grid(grid):
    # cache rasters as uint8: 2 MB of float64 per trajectory adds up fast
    return grid.data.astype(np.uint8), grid.cell_size, grid.origin


def _unpack_grid(packed):
    from auto4d.size_branch import BEVGrid

    data, cell, origin = packed
    return BEVGrid(data.astype(np.float64), cell, origin)


def corner_aligned_box_graph(init_det, ego, w_t, l_t):
    """Differentiable resize of the init box to predicted (w, l) tensors.

    The anchor corner and heading come from the init detection as constants;
    only the size flows gradients, matching apply_size(strategy corner).
    """
    box = init_det.box
    idx = closest_corner_index(box, ego)
    corner = box_corners(box)[idx]
    sa, sb = _CORNER_SIGNS[idx]
    th = box.pose.theta
    c, s = math.cos(th), math.sin(th)
    hl = l_t * (0.5 * sa)
    hw = w_t * (0.5 * sb)
    cx = corner[0] - (hl * c - hw * s)
    cy = corner[1] - (hl * s + hw * c)
    return cx, cy, th, w_t, l_t


class _SizeSample:
    __slots__ = ("grid", "pairs")

    def __init__(self, grid, pairs):
        self.grid = grid  # packed raster
        self.pairs = pairs  # list of (init detection, ego pose, gt box)


def _collect_size_samples(scenes, world_static=False):
    samples = []
    for scene, inits in scenes:
        gt_by_id = {t.id: t for t in scene.gt_trajectories}
        egos = [s.ego_pose for s in scene.sweeps]
        for tr in inits:
            gid = provenance_id(tr)
            if gid is None or gid not in gt_by_id:
                continue
            gt = gt_by_id[gid]
            gt_at = {d.frame_idx: d for d in gt.detections}
            pairs = [
                (d, egos[d.frame_idx], gt_at[d.frame_idx].box)
                for d in tr.detections
                if d.frame_idx in gt_at
            ]
            if not pairs:
                continue
            if world_static and tr.static_flag:
                obs = build_object_observation_world(scene, tr)
            else:
                obs = build_object_observation(scene, tr)
            if obs.empty:
                continue
            samples.append(_SizeSample(_pack_grid(rasterize_bev(obs)), pairs))
    return samples


def train_size_branch(scenes, cfg: TrainConfig):
    """Returns (model, per-step loss list); deterministic in cfg.seed.

    full_batch switches from sampled batches to every sample and frame each
    step, making the loss sequence a deterministic function of the model.
    """
    samples = _collect_size_samples(scenes, cfg.world_static)
    if not samples:
        raise ValueError("empty training set")
    model = SizeModel(seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng([0xA4D, cfg.seed, 30])
    losses = []
    for _ in range(cfg.steps):
        total = None
        n_terms = 0
        if cfg.full_batch:
            chosen = [(s, range(len(s.pairs))) for s in samples]
        else:
            chosen = []
            for _ in range(cfg.batch):
                sample = samples[int(rng.integers(len(samples)))]
                k = min(cfg.frames_per_traj, len(sample.pairs))
                picks = rng.choice(len(sample.pairs), size=k, replace=False)
                chosen.append((sample, [int(i) for i in picks]))
        for sample, picks in chosen:
            r = model.residuals(_unpack_grid(sample.grid))
            w_t, l_t = model.size_from_residuals(r)
            for idx in picks:
                det, ego, gt_box = sample.pairs[idx]
                pred = corner_aligned_box_graph(det, ego, w_t, l_t)
                term = iou_loss(pred, gt_box)
                total = term if total is None else total + term
                n_terms += 1
        loss = total * (1.0 / n_terms)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.data))
    return model, losses


def _size_correct(scene, inits, size_model, world_static=False):
    """Apply the trained size branch to every matchable trajectory."""
    egos = [s.ego_pose for s in scene.sweeps]
    out = []
    for tr in inits:
        if len(tr) == 0:
            continue
        if world_static and tr.static_flag:
            obs = build_object_observation_world(scene, tr)
        else:
            obs = build_object_observation(scene, tr)
        if obs.empty:
            out.append(tr)
            continue
        size = size_model.predict(rasterize_bev(obs))
        out.append(apply_size(tr, size, "corner", egos))
    return out


class _PathSample:
    __slots__ = ("scene", "traj", "gt_at", "starts")

    def __init__(self, scene, traj, gt_at, starts):
        self.scene = scene
        self.traj = traj
        self.gt_at = gt_at
        self.starts = starts


def _collect_path_samples(scenes, size_model, window, world_static=False):
    samples = []
    for scene, inits in scenes:
        gt_by_id = {t.id: t for t in scene.gt_trajectories}
        corrected = _size_correct(scene, inits, size_model, world_static)
        for tr in corrected:
            gid = provenance_id(tr)
            if gid is None or gid not in gt_by_id:
                continue
            gt_at = {d.frame_idx: d.box for d in gt_by_id[gid].detections}
            t_len = len(tr)
            if t_len <= window:
                starts = [0]
            else:
                starts = list(range(0, t_len - window + 1))
            samples.append(_PathSample(scene, tr, gt_at, starts))
    return samples


def train_path_branch(scenes, cfg: TrainConfig, size_model):
    """Trains on size-corrected inputs; the size model is read-only here."""
    if size_model is None:
        raise ValueError("size checkpoint required before path training")
    samples = _collect_path_samples(scenes, size_model, cfg.window, cfg.world_static)
    if not samples:
        raise ValueError("empty training set")
    model = PathModel(seed=cfg.seed, window=cfg.window)
    opt = Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng([0xA4D, cfg.seed, 31])
    losses = []
    for _ in range(cfg.steps):
        sample = samples[int(rng.integers(len(samples)))]
        tr = sample.traj
        lo = sample.starts[int(rng.integers(len(sample.starts)))]
        hi = min(len(tr), lo + cfg.window)
        f_motion = model.temporal_encode(motion_features(tr))
        total = None
        n_terms = 0
        for _, det, (dx, dy, dth) in model.decode_window(sample.scene, tr, lo, hi, f_motion):
            gt_box = sample.gt_at.get(det.frame_idx)
            if gt_box is None:
                continue
            p = det.pose
            c, s = math.cos(p.theta), math.sin(p.theta)
            if cfg.literal_eq7:
                xq = (dx + 1.0) * p.x
                yq = (dy + 1.0) * p.y
            else:
                xq = dx * (det.size.l * c) - dy * (det.size.w * s) + p.x
                yq = dx * (det.size.l * s) + dy * (det.size.w * c) + p.y
            th = dth + p.theta
            term = iou_loss((xq, yq, th, det.size.w, det.size.l), gt_box)
            total = term if total is None else total + term
            n_terms += 1
        if total is None:
            losses.append(float("nan"))
            continue
        loss = total * (1.0 / n_terms)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.data))
    return model, losses
