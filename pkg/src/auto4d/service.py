"""HTTP backend for the annotator loop.

Serves scenes and trajectories from a scene store, applies fragment links
(write-ahead journaled to edits.jsonl), and runs size+path refinement as
background jobs whose results land in numbered immutable revision files.
State for a scene is always reconstructible: init labels + journal replay.
"""

import json
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from auto4d.evaluation import eval_labels
from auto4d.geometry import BoxBEV, box_iou_bev
from auto4d.path_branch import PathModel, WINDOW_FRAMES
from auto4d.pipeline import refine_scene_full, simulate_annotator_link
from auto4d.scene_store import load_manifest, load_scene
from auto4d.size_branch import SizeModel
from auto4d.training import provenance_id
from auto4d.trajectory import load_trajectories, save_trajectories


class LinkCommand(BaseModel):
    a: int
    b: int
    tag: str = "anon"
    ts: Optional[float] = None
    scene_id: Optional[str] = None


def _det_obj(det):
    # detection fields may be numpy scalars; json needs plain floats
    return {
        "frame": int(det.frame_idx), "t": float(det.t),
        "x": float(det.pose.x), "y": float(det.pose.y), "theta": float(det.pose.theta),
        "w": float(det.size.w), "l": float(det.size.l), "score": float(det.score),
    }


def _box_objs(trajs, frame_idx):
    out = []
    for tr in trajs:
        for det in tr.detections:
            if det.frame_idx == frame_idx:
                out.append({"traj_id": tr.id, **_det_obj(det)})
    return out


class _SceneState:
    """Mutable labels for one scene: init + journaled edits."""

    def __init__(self, scene_dir: Path):
        self.dir = scene_dir
        self.lock = threading.Lock()
        self.manifest = load_manifest(scene_dir)
        self.gt = load_trajectories(scene_dir / "gt.json")
        init_path = scene_dir / "init.json"
        if not init_path.exists():
            raise FileNotFoundError(f"{scene_dir} has no init labels")
        self.current = load_trajectories(init_path)
        self.revision = 0
        self.n_links = 0
        self.job_id = None  # in-flight refine job for this scene
        self._scene_log = None
        self._replay()

    @property
    def journal_path(self) -> Path:
        return self.dir / "edits.jsonl"

    def _replay(self):
        if not self.journal_path.exists():
            return
        with open(self.journal_path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry["op"] == "link":
                    self._apply_link(entry["a"], entry["b"])
                elif entry["op"] == "refine":
                    rev = entry["revision"]
                    self.current = load_trajectories(self._revision_path(rev))
                    self.revision = rev

    def _revision_path(self, rev: int) -> Path:
        return self.dir / "revisions" / f"rev_{rev:04d}.json"

    def ids(self):
        return {tr.id for tr in self.current}

    def _apply_link(self, a: int, b: int) -> int:
        new_id = min(a, b)
        prov = {a: new_id, b: new_id}
        merged, conflicts = simulate_annotator_link(self.current, provenance=prov)
        if conflicts:
            raise ValueError(f"fragments {a} and {b} overlap in frames")
        self.current = merged
        self.n_links += 1
        return new_id

    def link(self, cmd: LinkCommand) -> int:
        """Validate, journal (write-ahead), then apply."""
        ids = self.ids()
        if cmd.a == cmd.b:
            raise HTTPException(400, "cannot link a fragment to itself")
        for fid in (cmd.a, cmd.b):
            if fid not in ids:
                raise HTTPException(404, f"no trajectory {fid}")
        frames_a = {d.frame_idx for tr in self.current if tr.id == cmd.a for d in tr.detections}
        frames_b = {d.frame_idx for tr in self.current if tr.id == cmd.b for d in tr.detections}
        overlap = sorted(frames_a & frames_b)
        if overlap:
            raise HTTPException(409, f"fragments overlap in frames {overlap}")
        entry = {
            "op": "link", "a": cmd.a, "b": cmd.b, "tag": cmd.tag,
            "ts": cmd.ts if cmd.ts is not None else time.time(),
        }
        with open(self.journal_path, "a") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
        return self._apply_link(cmd.a, cmd.b)

    def commit_revision(self, refined, job_id: str) -> int:
        """Persist refined labels as the next immutable revision."""
        rev = self.revision + 1
        path = self._revision_path(rev)
        path.parent.mkdir(exist_ok=True)
        if path.exists():
            raise RuntimeError(f"revision {rev} already exists")
        save_trajectories(path, refined)
        entry = {"op": "refine", "revision": rev, "job": job_id, "ts": time.time()}
        with open(self.journal_path, "a") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
        self.current = refined
        self.revision = rev
        return rev

    def scene_log(self):
        if self._scene_log is None:
            self._scene_log, _ = load_scene(self.dir)
        return self._scene_log

    def summary(self):
        table = eval_labels(self.current, self.gt, "current")
        return {
            "scene_id": self.manifest["scene_id"],
            "seed": self.manifest["seed"],
            "n_frames": self.manifest["n_frames"],
            "counts": {
                "gt": len(self.gt),
                "current": len(self.current),
                "links": self.n_links,
                "revision": self.revision,
            },
            "metrics": {"iou_0.9": table.fraction(0.9), "iou_0.8": table.fraction(0.8)},
        }

    def trajectory_objs(self):
        gt_by_id = {tr.id: tr for tr in self.gt}
        out = []
        for tr in self.current:
            gid = provenance_id(tr)
            gt_at = {}
            if gid in gt_by_id:
                gt_at = {d.frame_idx: d for d in gt_by_id[gid].detections}
            dets = []
            for det in tr.detections:
                entry = _det_obj(det)
                ref = gt_at.get(det.frame_idx)
                entry["iou"] = (
                    box_iou_bev(BoxBEV(det.pose, det.size), BoxBEV(ref.pose, ref.size))
                    if ref is not None else None
                )
                dets.append(entry)
            out.append({
                "id": int(tr.id),
                "static": None if tr.static_flag is None else bool(tr.static_flag),
                "gt_id": int(gid) if gid is not None else None,
                "n_frames": len(dets),
                "detections": dets,
            })
        return out


def build_app(store, size_ckpt=None, path_ckpt=None, window: int = WINDOW_FRAMES,
              align: str = "corner", world_static: bool = False):
    store = Path(store)
    if not store.is_dir():
        raise ValueError(f"store {store} is not a directory")
    size_model = None
    path_model = None
    if size_ckpt:
        size_model = SizeModel()
        size_model.load(size_ckpt)
    if path_ckpt:
        path_model = PathModel(window=window)
        path_model.load(path_ckpt)

    app = FastAPI(title="auto4d annotator backend")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    states = {}
    states_lock = threading.Lock()
    jobs = {}
    jobs_lock = threading.Lock()

    def scene_dirs():
        return sorted(
            (d for d in store.iterdir() if d.is_dir() and d.name.startswith("scene_")),
            key=lambda d: d.name,
        )

    def get_state(scene_id: str) -> _SceneState:
        with states_lock:
            st = states.get(scene_id)
            if st is None:
                d = store / f"scene_{scene_id}"
                if not d.is_dir():
                    raise HTTPException(404, f"no scene {scene_id}")
                st = _SceneState(d)
                states[scene_id] = st
        return st

    @app.get("/scenes")
    def list_scenes():
        return [get_state(d.name[len("scene_"):]).summary() for d in scene_dirs()]

    @app.get("/scenes/{scene_id}")
    def scene_summary(scene_id: str):
        return get_state(scene_id).summary()

    @app.get("/scenes/{scene_id}/frames/{k}")
    def frame(scene_id: str, k: int, n: int = 4):
        st = get_state(scene_id)
        log = st.scene_log()
        if not 0 <= k < len(log.sweeps):
            raise HTTPException(404, f"no frame {k}")
        if n < 1:
            raise HTTPException(400, "decimation must be >= 1")
        sweep = log.sweeps[k]
        pts = sweep.points[::n]
        with st.lock:
            current = list(st.current)
        return {
            "frame": k,
            "t": sweep.t,
            "ego": {"x": sweep.ego_pose.x, "y": sweep.ego_pose.y,
                    "theta": sweep.ego_pose.theta},
            "n_points_total": int(sweep.points.shape[0]),
            "decimation": n,
            "points": [[float(p[0]), float(p[1]), float(p[2])] for p in pts],
            "boxes": {
                "gt": _box_objs(st.gt, k),
                "current": _box_objs(current, k),
            },
        }

    @app.get("/scenes/{scene_id}/trajectories")
    def trajectories(scene_id: str):
        st = get_state(scene_id)
        with st.lock:
            return {"revision": st.revision, "trajectories": st.trajectory_objs()}

    @app.post("/scenes/{scene_id}/links")
    def post_link(scene_id: str, cmd: LinkCommand):
        st = get_state(scene_id)
        if cmd.scene_id is not None and cmd.scene_id != scene_id:
            raise HTTPException(400, "scene id mismatch")
        with st.lock:
            merged_id = st.link(cmd)
            return {"merged_id": merged_id, "n_trajectories": len(st.current)}

    def run_job(job_id: str, st: _SceneState):
        job = jobs[job_id]
        job["status"] = "running"
        try:
            with st.lock:
                before = list(st.current)
                token = (st.revision, st.n_links)
            scene = st.scene_log()
            refined = refine_scene_full(
                scene, before, size_model, path_model,
                align=align, world_static=world_static, window=window,
            )
            t_before = eval_labels(before, st.gt, "before")
            t_after = eval_labels(refined, st.gt, "after")
            with st.lock:
                if (st.revision, st.n_links) != token:
                    raise RuntimeError("labels changed while refining")
                rev = st.commit_revision(refined, job_id)
                st.job_id = None
            job["revision"] = rev
            job["delta"] = {
                "before": t_before.to_obj(),
                "after": t_after.to_obj(),
                "delta": {
                    str(t): t_after.fraction(t) - t_before.fraction(t)
                    for t in (0.5, 0.6, 0.7, 0.8, 0.9)
                },
            }
            job["status"] = "done"
        except Exception as exc:  # surfaced through the job payload
            with st.lock:
                st.job_id = None
            job["error"] = str(exc)
            job["status"] = "error"

    @app.post("/scenes/{scene_id}/refine")
    def post_refine(scene_id: str):
        if size_model is None or path_model is None:
            raise HTTPException(400, "size/path checkpoints not configured")
        st = get_state(scene_id)
        with st.lock:
            if st.job_id is not None:
                raise HTTPException(409, f"job {st.job_id} already running")
            job_id = f"{scene_id}-{int(time.time() * 1000)}-{len(jobs)}"
            st.job_id = job_id
        with jobs_lock:
            jobs[job_id] = {
                "job_id": job_id, "scene_id": scene_id,
                "status": "queued", "revision": None, "delta": None,
            }
        threading.Thread(target=run_job, args=(job_id, st), daemon=True).start()
        return {"job_id": job_id, "status": "queued"}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"no job {job_id}")
        return job

    return app
