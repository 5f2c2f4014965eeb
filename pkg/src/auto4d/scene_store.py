"""On-disk scene layout.

``scene_<id>/`` holds ``manifest.json`` (config, seed, frame count, ego
poses), ``sweeps.bin`` (magic ``A4DS``, uint32 version, uint32 frame count,
uint32 per-frame point counts, then little-endian float32 x,y,z,t records),
``gt.json`` and optionally ``init.json`` (trajectory lists).
"""

import json
import struct
from pathlib import Path

import numpy as np

from auto4d.geometry import Pose2D
from auto4d.simulation import NoiseConfig, SceneLog, SimConfig, Sweep
from auto4d.trajectory import load_trajectories, save_trajectories

_MAGIC = b"A4DS"
_VERSION = 1


def _write_sweeps(path, sweeps):
    counts = np.array([s.points.shape[0] for s in sweeps], dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(sweeps)))
        fh.write(counts.tobytes())
        for s in sweeps:
            fh.write(np.ascontiguousarray(s.points, dtype="<f4").tobytes())


def _read_sweeps(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _MAGIC:
        raise ValueError("not a sweep file")
    version, n_frames = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported sweep file version {version}")
    off = 12
    counts = np.frombuffer(buf, dtype="<u4", count=n_frames, offset=off)
    off += 4 * n_frames
    frames = []
    for k in range(n_frames):
        n = int(counts[k])
        pts = np.frombuffer(buf, dtype="<f4", count=4 * n, offset=off)
        off += 16 * n
        frames.append(pts.reshape(n, 4).astype(np.float64))
    return frames


def save_scene(root, scene_id, scene: SceneLog, init=None, noise: NoiseConfig = None):
    """Write one scene directory under `root`; returns its path."""
    root = Path(root)
    out = root / f"scene_{scene_id}"
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "scene_id": str(scene_id),
        "seed": scene.seed,
        "n_frames": len(scene.sweeps),
        "config_digest": scene.config_digest,
        "config": scene.config.to_obj() if scene.config else None,
        "ego_poses": [
            [s.ego_pose.x, s.ego_pose.y, s.ego_pose.theta] for s in scene.sweeps
        ],
        "frame_times": [s.t for s in scene.sweeps],
    }
    if noise is not None:
        manifest["noise"] = noise.to_obj()
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh)
    _write_sweeps(out / "sweeps.bin", scene.sweeps)
    save_trajectories(out / "gt.json", scene.gt_trajectories)
    if init is not None:
        save_trajectories(out / "init.json", init)
    return out


def load_manifest(scene_dir):
    with open(Path(scene_dir) / "manifest.json") as fh:
        return json.load(fh)


def load_scene(scene_dir):
    """Read a scene directory back; returns (SceneLog, init trajectories or None)."""
    scene_dir = Path(scene_dir)
    manifest = load_manifest(scene_dir)
    frames = _read_sweeps(scene_dir / "sweeps.bin")
    ego = manifest["ego_poses"]
    times = manifest.get("frame_times") or [float(k) for k in range(len(frames))]
    sweeps = []
    for k, pts in enumerate(frames):
        pose = Pose2D(ego[k][0], ego[k][1], ego[k][2])
        sweeps.append(Sweep(frame_idx=k, t=times[k], ego_pose=pose, points=pts))
    gt = load_trajectories(scene_dir / "gt.json")
    init_path = scene_dir / "init.json"
    init = load_trajectories(init_path) if init_path.exists() else None
    cfg = SimConfig.from_obj(manifest["config"]) if manifest.get("config") else None
    scene = SceneLog(
        sweeps=sweeps,
        gt_trajectories=gt,
        seed=manifest["seed"],
        config_digest=manifest["config_digest"],
        config=cfg,
        ego_poses=np.asarray(ego, dtype=np.float64),
    )
    return scene, init


def scene_ids(root):
    root = Path(root)
    if not root.exists():
        return []
    out = []
    for child in sorted(root.iterdir()):
        if child.is_dir() and child.name.startswith("scene_"):
            out.append(child.name[len("scene_"):])
    return out
