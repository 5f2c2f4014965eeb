import copy
import json

import numpy as np
import pytest

from rigs import path_rig_scene, size_rig_scene

from auto4d.evaluation import THRESHOLDS, breakdown_static_moving, eval_labels
from auto4d.geometry import Pose2D, Size2D, box_iou_bev, corner_align_resize
from auto4d.pipeline import gate_failures, render_markdown, run_pipeline, simulate_annotator_link
from auto4d.scene_store import save_scene
from auto4d.simulation import (
    NoiseConfig,
    SimConfig,
    fragment_tracks,
    make_initial_labels,
    simulate_scene,
)
from auto4d.trajectory import Detection, Trajectory
from auto4d.training import TrainConfig, train_path_branch, train_size_branch

EGO = Pose2D(0.0, 0.0, 0.0)


def det(x, y, th, w, l, frame, score=1.0, gt_id=None):
    return Detection(Pose2D(x, y, th), Size2D(w, l), 0.1 * frame, frame, score, gt_id)


def gt_track(traj_id, n=6, x0=10.0, y0=5.0, vx=1.0, static=False):
    dets = [
        det(x0 + (0.0 if static else vx * k), y0, 0.3, 1.9, 4.4, k, gt_id=traj_id)
        for k in range(n)
    ]
    return Trajectory(traj_id, dets, static)


def as_pred(gt):
    return copy.deepcopy(gt)


# ---------------------------------------------------------------- eval table


def test_perfect_labels_score_full_everywhere():
    gts = [gt_track(3), gt_track(4, y0=-8.0, static=True)]
    table = eval_labels([as_pred(t) for t in gts], gts)
    assert table.n_total == 12 and table.n_matched == 12
    for t in THRESHOLDS:
        assert table.fraction(t) == 1.0


def test_nested_corner_shrink_sits_between_point_eight_and_point_nine():
    gt = gt_track(1, n=5)
    pred = as_pred(gt)
    for d in pred.detections:
        small = corner_align_resize(
            d.box, Size2D(d.size.w * 0.9, d.size.l * 0.9), EGO
        )
        d.pose, d.size = small.pose, small.size
    # nested shrink by 0.9 per dim: intersection is the small box, IoU 0.81
    for dp, dg in zip(pred.detections, gt.detections):
        assert abs(box_iou_bev(dp.box, dg.box) - 0.81) < 1e-12
    table = eval_labels([pred], [gt])
    for t in (0.5, 0.6, 0.7, 0.8):
        assert table.fraction(t) == 1.0
    assert table.fraction(0.9) == 0.0


def test_fractions_non_increasing_in_threshold():
    rng = np.random.default_rng(5)
    for _ in range(25):
        gt = gt_track(1, n=8)
        pred = as_pred(gt)
        for d in pred.detections:
            d.pose = Pose2D(
                d.pose.x + rng.normal(0.0, 0.4),
                d.pose.y + rng.normal(0.0, 0.4),
                d.pose.theta + rng.normal(0.0, 0.1),
            )
        table = eval_labels([pred], [gt])
        fr = [table.fraction(t) for t in THRESHOLDS]
        assert all(a >= b for a, b in zip(fr, fr[1:]))


def test_unmatched_gt_frames_count_as_failures():
    gt = gt_track(2, n=10)
    pred = Trajectory(2, [copy.deepcopy(d) for d in gt.detections[:4]], None)
    table = eval_labels([pred], [gt])
    assert table.n_total == 10 and table.n_matched == 4
    for t in THRESHOLDS:
        assert table.fraction(t) == 0.4


def test_duplicate_claims_resolved_by_score():
    gt = gt_track(7, n=1)
    exact = as_pred(gt)
    off = as_pred(gt)
    d = off.detections[0]
    d.pose = Pose2D(d.pose.x + 1.2 * np.cos(0.3), d.pose.y + 1.2 * np.sin(0.3), d.pose.theta)
    # same-size boxes offset 1.2 m along the length axis: IoU (l-d)/(l+d)
    iou_off = box_iou_bev(off.detections[0].box, gt.detections[0].box)
    assert abs(iou_off - (4.4 - 1.2) / (4.4 + 1.2)) < 1e-12

    exact.detections[0].score = 0.9
    off.detections[0].score = 0.2
    high = eval_labels([Trajectory(1, exact.detections), Trajectory(2, off.detections)], [gt])
    assert high.fraction(0.9) == 1.0

    exact.detections[0].score = 0.2
    off.detections[0].score = 0.9
    low = eval_labels([Trajectory(1, exact.detections), Trajectory(2, off.detections)], [gt])
    assert low.fraction(0.5) == 1.0
    assert low.fraction(0.6) == 0.0


def test_predictions_without_provenance_are_ignored():
    gt = gt_track(1, n=4)
    pred = as_pred(gt)
    for d in pred.detections:
        d.gt_id = None
    table = eval_labels([pred], [gt])
    assert table.n_matched == 0
    assert all(table.fraction(t) == 0.0 for t in THRESHOLDS)


def test_evaluation_is_pure():
    rng = np.random.default_rng(9)
    gt = gt_track(1, n=6)
    pred = as_pred(gt)
    for d in pred.detections:
        d.pose = Pose2D(d.pose.x + rng.normal(0, 0.2), d.pose.y, d.pose.theta)
    a = eval_labels([pred], [gt]).to_obj()
    b = eval_labels([pred], [gt]).to_obj()
    assert a == b


def test_merge_sums_counts():
    gt1, gt2 = gt_track(1, n=5), gt_track(1, n=7, y0=-3.0)
    t1 = eval_labels([as_pred(gt1)], [gt1], label="a")
    pred2 = as_pred(gt2)
    pred2.detections = pred2.detections[:3]
    t2 = eval_labels([pred2], [gt2])
    merged = t1.merge(t2)
    assert merged.n_total == 12 and merged.n_matched == 8
    for t in THRESHOLDS:
        assert merged.passed[t] == t1.passed[t] + t2.passed[t]
    assert merged.fraction(0.9) == 8 / 12
    assert merged.label == "a"


def test_empty_table():
    table = eval_labels([], [])
    assert table.n_total == 0
    assert all(table.fraction(t) == 0.0 for t in THRESHOLDS)


# ------------------------------------------------------- static/moving split


def test_all_static_scene_has_empty_moving_table():
    gts = [gt_track(1, static=True), gt_track(2, y0=9.0, static=True)]
    preds = [as_pred(t) for t in gts]
    static, moving = breakdown_static_moving(preds, gts)
    assert moving.n_total == 0
    assert static.n_total == 12
    assert static.fraction(0.9) == 1.0


def test_split_counts_sum_to_total():
    gts = [gt_track(1, static=True), gt_track(2, y0=9.0), gt_track(3, y0=-9.0)]
    preds = [as_pred(t) for t in gts]
    preds[1].detections = preds[1].detections[:2]
    total = eval_labels(preds, gts)
    static, moving = breakdown_static_moving(preds, gts)
    assert static.n_total + moving.n_total == total.n_total
    assert static.n_matched + moving.n_matched == total.n_matched
    for t in THRESHOLDS:
        assert static.passed[t] + moving.passed[t] == total.passed[t]


# ---------------------------------------------------------- annotator linking


def test_two_fragments_rejoin_into_source_track():
    src = gt_track(1, n=8)
    a = Trajectory(1, src.detections[:3], src.static_flag)
    b = Trajectory(9, src.detections[3:], src.static_flag)
    merged, conflicts = simulate_annotator_link([a, b], {1: 1, 9: 1})
    assert conflicts == []
    assert len(merged) == 1 and merged[0].id == 1
    assert merged[0].frames() == src.frames()
    # geometry untouched: the merged track reuses the original objects
    assert all(d is e for d, e in zip(merged[0].detections, src.detections))


def test_no_fragmentation_is_identity():
    trs = [gt_track(1), gt_track(2, y0=-4.0)]
    merged, conflicts = simulate_annotator_link(trs, {1: 1, 2: 2})
    assert conflicts == []
    assert all(m is t for m, t in zip(merged, trs))
    merged2, _ = simulate_annotator_link(trs, None)
    assert all(m is t for m, t in zip(merged2, trs))


def test_overlapping_frames_keep_higher_score_and_report():
    src = gt_track(1, n=6)
    a = Trajectory(1, [copy.deepcopy(d) for d in src.detections[:4]], None)
    b = Trajectory(5, [copy.deepcopy(d) for d in src.detections[2:]], None)
    for d in a.detections:
        d.score = 0.8
    for d in b.detections:
        d.score = 0.3
    b.detections[0].score = 0.95  # frame 2 should come from b
    merged, conflicts = simulate_annotator_link([a, b], {1: 1, 5: 1})
    assert len(merged) == 1
    out = merged[0]
    assert out.frames() == list(range(6))
    by_frame = {d.frame_idx: d for d in out.detections}
    assert by_frame[2] is b.detections[0]
    assert by_frame[3] is a.detections[3]
    assert {(c["frame"], c["kept"]) for c in conflicts} == {(2, 5), (3, 1)}


def test_grouping_by_gt_identity_without_provenance():
    src = gt_track(4, n=6)
    a = Trajectory(11, src.detections[:2], None)
    b = Trajectory(12, src.detections[2:], None)
    fp = Trajectory(13, [det(40.0, 0.0, 0.0, 2.0, 4.5, 0)], None)
    merged, _ = simulate_annotator_link([a, fp, b], None)
    assert sorted(len(t) for t in merged) == [1, 6]
    joined = next(t for t in merged if len(t) == 6)
    assert joined.id == 11
    assert joined.frames() == src.frames()


def test_fragment_then_link_restores_every_track():
    scene = simulate_scene(
        SimConfig(n_frames=8, n_vehicles_min=4, n_vehicles_max=4,
                  angular_resolution=2 * np.pi / 1024, max_range=60.0),
        seed=31,
    )
    inits = make_initial_labels(scene, NoiseConfig(), seed=31)
    frags, prov = fragment_tracks(inits, 1.0, seed=7)
    assert len(frags) > len(inits)
    merged, conflicts = simulate_annotator_link(frags, prov)
    assert conflicts == []
    assert sorted(t.id for t in merged) == sorted(t.id for t in inits)
    orig = {t.id: t for t in inits}
    for tr in merged:
        assert tr.frames() == orig[tr.id].frames()
        assert all(d is e for d, e in zip(tr.detections, orig[tr.id].detections))


# ------------------------------------------------------------------ training


def test_split_lists_must_be_disjoint():
    with pytest.raises(ValueError):
        TrainConfig(train_scenes=(1, 2), val_scenes=(2,))
    TrainConfig(train_scenes=(1, 2), val_scenes=(3,), test_scenes=(4,))


def test_empty_training_set_raises():
    scene, _ = size_rig_scene()
    with pytest.raises(ValueError):
        train_size_branch([(scene, [])], TrainConfig(steps=1))
    orphan = Trajectory(50, [det(20.0, 3.0, 0.0, 2.0, 4.5, k) for k in range(3)], None)
    with pytest.raises(ValueError):
        train_size_branch([(scene, [orphan])], TrainConfig(steps=1))


def test_path_training_requires_size_checkpoint():
    scene, inits = size_rig_scene()
    with pytest.raises(ValueError):
        train_path_branch([(scene, inits)], TrainConfig(steps=1), None)


def test_size_checkpoint_bytes_deterministic(tmp_path):
    scene, inits = size_rig_scene()
    cfg = TrainConfig(seed=3, lr=3e-3, steps=12, batch=1, frames_per_traj=3)
    paths = []
    for k in range(2):
        model, losses = train_size_branch([(scene, inits)], cfg)
        p = tmp_path / f"size_{k}.a4dp"
        model.save(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    other, _ = train_size_branch([(scene, inits)], TrainConfig(seed=4, lr=3e-3, steps=12, batch=1, frames_per_traj=3))
    p = tmp_path / "size_other.a4dp"
    other.save(p)
    assert p.read_bytes() != paths[0].read_bytes()


def test_path_checkpoint_bytes_deterministic(tmp_path):
    scene, _, inits = path_rig_scene()
    size_model, _ = train_size_branch(
        [(scene, inits)], TrainConfig(seed=0, lr=3e-3, steps=20, batch=1, frames_per_traj=3)
    )
    cfg = TrainConfig(seed=1, lr=3e-3, steps=6, batch=1, window=10)
    paths = []
    for k in range(2):
        model, _ = train_path_branch([(scene, inits)], cfg, size_model)
        p = tmp_path / f"path_{k}.a4dp"
        model.save(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_size_overfits_five_trajectories(size_overfit):
    assert len(size_overfit["inits"]) == 5
    losses = size_overfit["losses"]
    assert len(losses) == 500
    assert losses[-1] < 0.05
    assert float(np.mean(losses[-10:])) < 0.05
    assert losses[-1] < losses[0]


def test_path_overfits_five_trajectories(path_overfit):
    assert len(path_overfit["inits"]) == 5
    losses = path_overfit["losses"]
    assert len(losses) == 500
    assert losses[-1] < 0.05
    assert float(np.mean(losses[-10:])) < 0.05
    assert losses[-1] < losses[0]


def test_size_checkpoint_untouched_by_path_training(path_overfit):
    assert path_overfit["size_ckpt_before"] == path_overfit["size_ckpt_after"]


def test_size_loss_decreases_over_first_fifty_steps():
    scene, inits = size_rig_scene()
    curves = []
    for seed in range(3):
        cfg = TrainConfig(seed=seed, lr=1e-3, steps=50, full_batch=True)
        _, losses = train_size_branch([(scene, inits)], cfg)
        curves.append(losses)
    mean = np.mean(curves, axis=0)
    blocks = mean.reshape(5, 10).mean(axis=1)
    assert all(a > b for a, b in zip(blocks, blocks[1:]))
    assert mean[-1] < mean[0]


# -------------------------------------------------------------- run_pipeline


@pytest.fixture(scope="module")
def small_store(tmp_path_factory):
    root = tmp_path_factory.mktemp("store")
    noise = NoiseConfig()
    for k, seed in enumerate((61, 62)):
        scene = simulate_scene(
            SimConfig(n_frames=8, n_vehicles_min=3, n_vehicles_max=4,
                      angular_resolution=2 * np.pi / 1024, max_range=55.0),
            seed=seed,
        )
        inits = make_initial_labels(scene, noise, seed=seed)
        save_scene(root, str(k), scene, init=inits, noise=noise)
    return [root / "scene_0", root / "scene_1"]


def test_report_lists_requested_variants_and_reproduces(small_store):
    variants = ("init", "window_detector", "kalman")
    rep1 = run_pipeline(small_store, variants=variants)
    rep2 = run_pipeline(small_store, variants=variants)
    assert rep1["options"]["variants"] == list(variants)
    assert set(rep1["tables"]) == set(variants)
    assert json.dumps(rep1, sort_keys=True) == json.dumps(rep2, sort_keys=True)
    md = render_markdown(rep1)
    for v in variants:
        assert f"| {v} |" in md
    assert rep1["digest"] in md


def test_report_deltas_match_tables(small_store):
    rep = run_pipeline(small_store, variants=("init", "kalman"))
    for t in THRESHOLDS:
        want = (
            rep["tables"]["kalman"]["fractions"][str(t)]
            - rep["tables"]["init"]["fractions"][str(t)]
        )
        assert rep["deltas_vs_init"]["kalman"][str(t)] == want


def test_breakdown_tables_cover_all_boxes(small_store):
    rep = run_pipeline(small_store, variants=("init",))
    tab = rep["tables"]["init"]
    split = rep["breakdown"]["init"]
    assert split["static"]["n_total"] + split["moving"]["n_total"] == tab["n_total"]


def test_unknown_variant_and_missing_checkpoints_raise(small_store):
    with pytest.raises(ValueError):
        run_pipeline(small_store, variants=("init", "bogus"))
    with pytest.raises(ValueError):
        run_pipeline(small_store, variants=("auto4d_size",))
    with pytest.raises(ValueError):
        run_pipeline(small_store, variants=("auto4d_full",))


def test_gate_flags_bad_orderings():
    def rep(init, kalman, size, full):
        out = {"tables": {}}
        vals = {"init": init, "kalman": kalman, "auto4d_size": size, "auto4d_full": full}
        for v, x in vals.items():
            out["tables"][v] = {"fractions": {str(t): x for t in THRESHOLDS}}
        return out

    good = rep(0.3, 0.32, 0.5, 0.55)
    assert gate_failures(good) == []
    assert "full_vs_init_gain_at_0.9" in gate_failures(rep(0.3, 0.3, 0.5, 0.33))
    assert "full_at_least_size_at_0.9" in gate_failures(rep(0.3, 0.3, 0.5, 0.45))
    assert "kalman_gain_smaller_than_auto4d_at_0.9" in gate_failures(rep(0.3, 0.45, 0.4, 0.44))
    bad = rep(0.3, 0.32, 0.5, 0.55)
    bad["tables"]["init"]["fractions"]["0.9"] = 0.9
    bad["tables"]["init"]["fractions"]["0.5"] = 0.1
    assert any(f.startswith("threshold_monotonicity") for f in gate_failures(bad))
