"""End-to-end comparison harness.

Runs a set of labeling variants over identical scene inputs, scores each
against ground truth, and assembles a JSON/markdown report.  Also hosts the
annotator linking step that merges trajectory fragments before a second
refinement pass.
"""

import hashlib
import json
import math
from dataclasses import replace
from pathlib import Path

from auto4d.evaluation import THRESHOLDS, EvalTable, breakdown_static_moving, eval_labels
from auto4d.path_branch import classify_static
from auto4d.scene_store import load_manifest, load_scene
from auto4d.simulation import NoiseConfig, make_initial_labels
from auto4d.size_branch import (
    apply_size,
    build_object_observation,
    build_object_observation_world,
    rasterize_bev,
)
from auto4d.smoothing import kalman_smooth
from auto4d.trajectory import Trajectory

VARIANTS = ("init", "window_detector", "kalman", "auto4d_size", "auto4d_full")


def refine_scene_size(scene, inits, size_model, align="corner", world_static=False):
    """Size-branch pass over every trajectory of one scene.

    Static calls come from the trajectory geometry, never from any flag the
    input may carry; the call is recorded on the output so the path branch
    reuses it.  Trajectories whose boxes caught no lidar points keep their
    initial sizes.
    """
    egos = [s.ego_pose for s in scene.sweeps]
    out = []
    for tr in inits:
        if len(tr) == 0:
            continue
        is_static = classify_static(tr)
        if world_static and is_static:
            obs = build_object_observation_world(scene, replace(tr, static_flag=True))
        else:
            obs = build_object_observation(scene, tr)
        if obs.empty:
            out.append(replace(tr, static_flag=is_static))
            continue
        size = size_model.predict(rasterize_bev(obs))
        refined = apply_size(tr, size, align, egos)
        out.append(replace(refined, static_flag=is_static))
    return out


def refine_scene_path(scene, trajs, path_model, window=None, stride=5, literal_eq7=False):
    """Path-branch pass; trusts a static flag when present, classifies otherwise."""
    out = []
    for tr in trajs:
        if len(tr) == 0:
            continue
        static = tr.static_flag if tr.static_flag is not None else classify_static(tr)
        out.append(
            path_model.refine_trajectory(
                scene, tr, window=window, stride=stride, static=static,
                literal_eq7=literal_eq7,
            )
        )
    return out


def refine_scene_full(
    scene, inits, size_model, path_model,
    align="corner", world_static=False, window=None, stride=5, literal_eq7=False,
):
    sized = refine_scene_size(scene, inits, size_model, align, world_static)
    return refine_scene_path(scene, sized, path_model, window, stride, literal_eq7)


def _window_detector_labels(scene, manifest):
    """Init labels re-drawn as if the detector saw twice the frames.

    Averaging twice the evidence cuts continuous pose noise by sqrt(2);
    shape deficits come from partial views and do not average out, so the
    size noise keeps its original parameters.  An emulation, not a detector.
    """
    if "noise" not in manifest:
        raise ValueError("scene manifest records no detector noise model")
    noise = NoiseConfig.from_obj(manifest["noise"])
    emulated = replace(
        noise,
        pos_sigma_base=noise.pos_sigma_base / math.sqrt(2.0),
        pos_sigma_range_coef=noise.pos_sigma_range_coef / math.sqrt(2.0),
        theta_sigma=noise.theta_sigma / math.sqrt(2.0),
    )
    return make_initial_labels(scene, emulated, manifest["seed"])


def simulate_annotator_link(fragments, provenance=None):
    """Merge trajectory fragments that belong to one object.

    `provenance` maps fragment id -> source id; without it, fragments are
    grouped by the majority gt id of their detections (tracks with no gt
    provenance stay separate).  Returns (merged list, conflicts).  Duplicate
    frames keep the higher-scored box and are reported as conflicts; box
    geometry is never touched, only grouping.
    """
    groups = {}
    order = []
    for k, tr in enumerate(fragments):
        if provenance is not None:
            key = ("src", provenance.get(tr.id, tr.id))
        else:
            votes = {}
            for d in tr.detections:
                if d.gt_id is not None:
                    votes[d.gt_id] = votes.get(d.gt_id, 0) + 1
            if votes:
                key = ("gt", max(votes.items(), key=lambda kv: (kv[1], -kv[0]))[0])
            else:
                key = ("solo", k)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(tr)
    merged = []
    conflicts = []
    for key in order:
        members = groups[key]
        if len(members) == 1:
            merged.append(members[0])
            continue
        members = sorted(members, key=lambda t: t.id)
        new_id = key[1] if key[0] == "src" else min(t.id for t in members)
        by_frame = {}
        owner = {}
        for tr in members:
            for d in tr.detections:
                cur = by_frame.get(d.frame_idx)
                if cur is None:
                    by_frame[d.frame_idx] = d
                    owner[d.frame_idx] = tr.id
                else:
                    keep_new = d.score > cur.score
                    conflicts.append({
                        "id": new_id,
                        "frame": d.frame_idx,
                        "kept": tr.id if keep_new else owner[d.frame_idx],
                        "dropped": owner[d.frame_idx] if keep_new else tr.id,
                    })
                    if keep_new:
                        by_frame[d.frame_idx] = d
                        owner[d.frame_idx] = tr.id
        dets = [by_frame[f] for f in sorted(by_frame)]
        flags = {t.static_flag for t in members}
        flag = flags.pop() if len(flags) == 1 else None
        merged.append(Trajectory(new_id, dets, flag))
    return merged, conflicts


def _report_digest(obj):
    blob = json.dumps(obj, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_pipeline(
    scene_dirs,
    size_model=None,
    path_model=None,
    variants=VARIANTS,
    align="corner",
    world_static=False,
    window=None,
    stride=5,
    literal_eq7=False,
):
    """Score every requested variant on the same scenes; returns a report dict."""
    variants = tuple(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    if {"auto4d_size", "auto4d_full"} & set(variants) and size_model is None:
        raise ValueError("size checkpoint required for the auto4d variants")
    if "auto4d_full" in variants and path_model is None:
        raise ValueError("path checkpoint required for auto4d_full")

    totals = {v: EvalTable.empty(v) for v in variants}
    split_tot = {v: (EvalTable.empty("static"), EvalTable.empty("moving")) for v in variants}
    scene_meta = []
    for d in scene_dirs:
        scene, inits = load_scene(d)
        if inits is None:
            raise ValueError(f"{d} has no initial labels")
        manifest = load_manifest(d)
        for v in variants:
            if v == "init":
                labels = inits
            elif v == "window_detector":
                labels = _window_detector_labels(scene, manifest)
            elif v == "kalman":
                labels = [kalman_smooth(tr) for tr in inits]
            elif v == "auto4d_size":
                labels = refine_scene_size(scene, inits, size_model, align, world_static)
            else:
                labels = refine_scene_full(
                    scene, inits, size_model, path_model,
                    align, world_static, window, stride, literal_eq7,
                )
            totals[v] = totals[v].merge(eval_labels(labels, scene.gt_trajectories, v))
            s, m = breakdown_static_moving(labels, scene.gt_trajectories)
            split_tot[v] = (split_tot[v][0].merge(s), split_tot[v][1].merge(m))
        scene_meta.append({
            "dir": str(Path(d)),
            "scene_id": manifest["scene_id"],
            "seed": manifest["seed"],
            "config_digest": manifest["config_digest"],
        })

    options = {
        "variants": list(variants),
        "align": align,
        "world_static": world_static,
        "window": window,
        "stride": stride,
        "literal_eq7": literal_eq7,
    }
    report = {
        "options": options,
        "scenes": scene_meta,
        "tables": {v: totals[v].to_obj() for v in variants},
        "breakdown": {
            v: {"static": split_tot[v][0].to_obj(), "moving": split_tot[v][1].to_obj()}
            for v in variants
        },
    }
    if "init" in variants:
        base = totals["init"]
        report["deltas_vs_init"] = {
            v: {str(t): totals[v].fraction(t) - base.fraction(t) for t in THRESHOLDS}
            for v in variants if v != "init"
        }
    report["digest"] = _report_digest({"options": options, "scenes": scene_meta})
    return report


def render_markdown(report) -> str:
    lines = ["# Label quality comparison", ""]
    lines.append(
        f"{len(report['scenes'])} scenes, report digest `{report['digest']}`"
    )
    lines.append("")
    head = "| variant | boxes | matched |"
    rule = "| --- | --- | --- |"
    for t in THRESHOLDS:
        head += f" >= {t} |"
        rule += " --- |"
    lines.extend([head, rule])
    for v in report["options"]["variants"]:
        tab = report["tables"][v]
        row = f"| {v} | {tab['n_total']} | {tab['n_matched']} |"
        for t in THRESHOLDS:
            row += f" {100.0 * tab['fractions'][str(t)]:.2f}% |"
        lines.append(row)
    lines.append("")
    if "deltas_vs_init" in report:
        lines.append("Deltas vs init (percentage points):")
        lines.append("")
        for v, deltas in report["deltas_vs_init"].items():
            parts = ", ".join(
                f">= {t}: {100.0 * deltas[str(t)]:+.2f}" for t in THRESHOLDS
            )
            lines.append(f"- {v}: {parts}")
        lines.append("")
    return "\n".join(lines)


def gate_failures(report) -> list:
    """Ordering checks a finished benchmark report must satisfy.

    Only checks whose variants are present run; returns the failed names.
    """
    frac = {v: report["tables"][v]["fractions"] for v in report["tables"]}
    have = set(frac)
    failures = []

    def f(v, t=0.9):
        return frac[v][str(t)]

    if {"init", "auto4d_full"} <= have:
        if f("auto4d_full") - f("init") < 0.05:
            failures.append("full_vs_init_gain_at_0.9")
    if {"auto4d_size", "auto4d_full"} <= have:
        if f("auto4d_full") < f("auto4d_size"):
            failures.append("full_at_least_size_at_0.9")
    if {"init", "kalman", "auto4d_full"} <= have:
        if f("kalman") - f("init") >= f("auto4d_full") - f("init"):
            failures.append("kalman_gain_smaller_than_auto4d_at_0.9")
    for v in have:
        fr = [frac[v][str(t)] for t in THRESHOLDS]
        if any(a < b - 1e-12 for a, b in zip(fr, fr[1:])):
            failures.append(f"threshold_monotonicity_{v}")
    return failures
