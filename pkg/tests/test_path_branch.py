import math

import numpy as np
import pytest

from auto4d.geometry import Pose2D, Size2D, points_in_box, wrap_angle
from auto4d.nn import Tensor
from auto4d.path_branch import (
    PathModel,
    PathObservation,
    PoseDelta,
    apply_pose_refinement,
    build_path_observation,
    classify_static,
    motion_features,
    rasterize_path,
)
from auto4d.simulation import SimConfig, VehicleSpec, simulate_scene
from auto4d.trajectory import Detection, Trajectory


def det(x, y, t, frame, theta=0.0, w=2.0, l=4.0, score=1.0):
    return Detection(Pose2D(x, y, theta), Size2D(w, l), t, frame, score)


def scene_with(vehicles, n_frames=16, ego_speed=0.0, seed=3):
    cfg = SimConfig(
        n_frames=n_frames, dt=0.1, ego_speed=ego_speed, max_range=60.0,
        angular_resolution=2.0 * math.pi / 1024.0, range_sigma=0.0,
        vertical_resolution=0.02, vehicles=vehicles,
    )
    return simulate_scene(cfg, seed=seed)


def static_vehicle(pos=(12.0, 4.0), theta=0.3, n_frames=16):
    return VehicleSpec(
        id=0, size=Size2D(2.0, 4.6), height=1.6,
        init_pose=Pose2D(pos[0], pos[1], theta),
        motion_profile=np.zeros((n_frames - 1, 2)), static_flag=True,
    )


def moving_vehicle(speed=6.0, pos=(12.0, 3.0), n_frames=16):
    prof = np.column_stack([np.full(n_frames - 1, speed), np.zeros(n_frames - 1)])
    return VehicleSpec(
        id=0, size=Size2D(2.0, 4.6), height=1.6,
        init_pose=Pose2D(pos[0], pos[1], 0.0),
        motion_profile=prof, static_flag=False,
    )


class TestPathObservation:
    def test_static_slices_identical_with_parked_ego(self):
        scene = scene_with([static_vehicle()])
        gt = scene.gt_trajectories[0]
        obs = build_path_observation(scene, gt)
        ref = None
        for k in np.unique(obs.frames):
            sl = obs.points[obs.frames == k][:, :2]
            sl = sl[np.lexsort((sl[:, 1], sl[:, 0]))]
            if ref is None:
                ref = sl
            else:
                assert sl.shape == ref.shape
                assert np.allclose(sl, ref, atol=1e-12)

    def test_single_frame_window_matches_manual_extraction(self):
        scene = scene_with([static_vehicle()])
        gt = scene.gt_trajectories[0]
        d = gt.detections[5]
        obs = build_path_observation(scene, gt, [d.frame_idx])
        want = points_in_box(scene.sweeps[d.frame_idx].points, d.box, scale=1.1)
        assert obs.points.shape == want.shape
        assert np.allclose(obs.points, want, atol=1e-12)
        assert obs.window == (5,)

    def test_moving_centroids_advance_monotonically(self):
        scene = scene_with([moving_vehicle()])
        gt = scene.gt_trajectories[0]
        obs = build_path_observation(scene, gt)
        cx = []
        for k in sorted(np.unique(obs.frames)):
            cx.append(obs.points[obs.frames == k][:, 0].mean())
        diffs = np.diff(cx)
        assert (diffs > 0).all()

    def test_empty_window_rejected(self):
        scene = scene_with([static_vehicle()])
        with pytest.raises(ValueError):
            build_path_observation(scene, scene.gt_trajectories[0], [])


def toy_obs(rows, window):
    pts = np.asarray([r[:4] for r in rows], dtype=np.float64)
    frames = np.asarray([r[4] for r in rows], dtype=np.int64)
    return PathObservation(pts, frames, tuple(window), 0)


class TestRasterizePath:
    def test_channel_count_and_time_slotting(self):
        obs = toy_obs([(1.0, 2.0, 0.2, 0.6, 6)], window=(5, 6, 7))
        grid = rasterize_path(obs, (0.0, 0.0))
        assert grid.data.shape == (40, 192, 192)
        occ_channels = np.flatnonzero(grid.data.reshape(40, -1).any(axis=1))
        # frame 6 is slot 1, z=0.2 is height bin 0
        assert occ_channels.tolist() == [4]

    def test_binary_and_drop_count(self):
        # keep the coincident pair inside one cell, off the cell boundary
        obs = toy_obs(
            [(0.03, 0.03, 0.1, 0.0, 2), (0.04, 0.04, 0.1, 0.1, 2),
             (40.0, 0.0, 0.1, 0.2, 2)],
            window=(2,))
        grid = rasterize_path(obs, (0.0, 0.0), window_size=1)
        assert grid.data.sum() == 1.0
        assert grid.dropped == 1

    def test_static_object_fills_same_cells_every_slot(self):
        scene = scene_with([static_vehicle()], n_frames=10)
        gt = scene.gt_trajectories[0]
        obs = build_path_observation(scene, gt)
        center = (obs.points[:, 0].mean(), obs.points[:, 1].mean())
        grid = rasterize_path(obs, center)
        per_slot = grid.data.reshape(10, 4, 192, 192).max(axis=1)
        for k in range(1, 10):
            assert np.array_equal(per_slot[k], per_slot[0])

    def test_window_overflow_rejected(self):
        obs = toy_obs([(0.0, 0.0, 0.1, 0.0, k) for k in range(11)],
                      window=tuple(range(11)))
        with pytest.raises(ValueError):
            rasterize_path(obs, (0.0, 0.0))


class TestMotionFeatures:
    def test_stationary_all_zero(self):
        tr = Trajectory(0, [det(3.0, 4.0, 0.1 * k, k, theta=0.7) for k in range(6)])
        assert (motion_features(tr) == 0.0).all()

    def test_constant_velocity_rows(self):
        tr = Trajectory(0, [det(float(k), 0.0, 0.1 * k, k) for k in range(5)])
        m = motion_features(tr)
        assert (m[0] == 0.0).all()
        assert np.allclose(m[1:], [[1.0, 0.0, 0.0]] * 4)

    def test_heading_difference_wraps(self):
        tr = Trajectory(0, [det(0.0, 0.0, 0.0, 0, theta=3.1),
                            det(0.0, 0.0, 0.1, 1, theta=-3.1)])
        m = motion_features(tr)
        assert m[1, 2] == pytest.approx(2.0 * math.pi - 6.2, abs=1e-12)

    def test_cumulative_sum_reconstructs_trajectory(self):
        rng = np.random.default_rng(4)
        dets = []
        x, y, th = 0.0, 0.0, 3.0
        for k in range(30):
            dets.append(det(x, y, 0.1 * k, k, theta=wrap_angle(th)))
            x += rng.normal(0.0, 1.0)
            y += rng.normal(0.0, 1.0)
            th += rng.normal(0.0, 0.8)  # wraps repeatedly
        tr = Trajectory(0, dets)
        m = motion_features(tr)
        rx = dets[0].pose.x + np.cumsum(m[:, 0])
        ry = dets[0].pose.y + np.cumsum(m[:, 1])
        rt = dets[0].pose.theta + np.cumsum(m[:, 2])
        for k, d in enumerate(dets):
            assert abs(rx[k] - d.pose.x) < 1e-9
            assert abs(ry[k] - d.pose.y) < 1e-9
            assert abs(wrap_angle(rt[k] - d.pose.theta)) < 1e-9


class TestEncodersAndDecode:
    def test_path_encoder_shape_and_bias_map(self):
        model = PathModel(seed=1)
        out = model.encoder(Tensor(np.zeros((40, 64, 64))))
        assert out.shape == (64, 16, 16)
        flat = out.data.reshape(64, -1)
        assert (flat.max(axis=1) == flat.min(axis=1)).all()

    def test_temporal_encode_preserves_length(self):
        model = PathModel(seed=2)
        for t_len in (1, 3, 4, 5, 8, 10):
            out = model.temporal_encode(np.random.default_rng(t_len).normal(size=(t_len, 3)))
            assert out.shape == (32, t_len)

    def test_encoder_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        model = PathModel(seed=3)
        x = (rng.random((40, 16, 16)) < 0.05).astype(np.float64)
        proj = rng.normal(size=(64, 4, 4))

        def value():
            return float((model.encoder(Tensor(x)).data * proj).sum())

        loss = (model.encoder(Tensor(x)) * Tensor(proj)).sum()
        model.params.zero_grad()
        loss.backward()
        for name in ("path_enc.0.w", "path_enc.3.w", "path_enc.5.b"):
            t = model.params[name]
            flat, gflat = t.data.reshape(-1), t.grad.reshape(-1)
            for idx in rng.integers(0, flat.size, 3):
                eps = 1e-5
                keep = flat[idx]
                flat[idx] = keep + eps
                hi = value()
                flat[idx] = keep - eps
                lo = value()
                flat[idx] = keep
                fd = (hi - lo) / (2 * eps)
                assert abs(fd - gflat[idx]) / max(abs(fd), abs(gflat[idx]), 1e-8) < 1e-3

    def test_decode_zero_head_and_full_gradient(self):
        scene = scene_with([moving_vehicle()], n_frames=12)
        gt = scene.gt_trajectories[0]
        model = PathModel(seed=4)
        f_motion = model.temporal_encode(motion_features(gt))
        frames = [d.frame_idx for d in gt.detections[:10]]
        obs = build_path_observation(scene, gt, frames)
        center = (float(np.mean([d.pose.x for d in gt.detections[:10]])),
                  float(np.mean([d.pose.y for d in gt.detections[:10]])))
        grid = rasterize_path(obs, center, window_m=12.8)
        feat = model.encoder(Tensor(grid.data))
        trip = model.decode_graph(feat, grid, f_motion, 4, gt.detections[4])
        assert all(float(v.data) == 0.0 for v in trip)

        # make the head nonzero and finite-difference the whole decode
        rng = np.random.default_rng(6)
        model.params["path_head.1.w"].data[...] = rng.normal(
            0.0, 0.2, model.params["path_head.1.w"].shape)
        proj = rng.normal(size=3)

        def value():
            f_m = model.temporal_encode(motion_features(gt))
            f_p = model.encoder(Tensor(grid.data))
            t3 = model.decode_graph(f_p, grid, f_m, 4, gt.detections[4])
            return float(sum(proj[i] * float(t3[i].data) for i in range(3)))

        f_m = model.temporal_encode(motion_features(gt))
        f_p = model.encoder(Tensor(grid.data))
        t3 = model.decode_graph(f_p, grid, f_m, 4, gt.detections[4])
        loss = t3[0] * proj[0] + t3[1] * proj[1] + t3[2] * proj[2]
        model.params.zero_grad()
        loss.backward()
        for name in ("path_enc.4.w", "path_unet.enc0a.w", "path_head.0.w",
                     "path_head.1.w"):
            t = model.params[name]
            flat, gflat = t.data.reshape(-1), t.grad.reshape(-1)
            for idx in rng.integers(0, flat.size, 2):
                eps = 1e-5
                keep = flat[idx]
                flat[idx] = keep + eps
                hi = value()
                flat[idx] = keep - eps
                lo = value()
                flat[idx] = keep
                fd = (hi - lo) / (2 * eps)
                assert abs(fd - gflat[idx]) / max(abs(fd), abs(gflat[idx]), 1e-6) < 1e-3

    def test_decode_sensitive_to_motion_permutation(self):
        scene = scene_with([moving_vehicle()], n_frames=12)
        gt = scene.gt_trajectories[0]
        model = PathModel(seed=7)
        rng = np.random.default_rng(8)
        model.params["path_head.1.w"].data[...] = rng.normal(
            0.0, 0.2, model.params["path_head.1.w"].shape)
        frames = [d.frame_idx for d in gt.detections[:10]]
        obs = build_path_observation(scene, gt, frames)
        center = (float(np.mean([d.pose.x for d in gt.detections[:10]])),
                  float(np.mean([d.pose.y for d in gt.detections[:10]])))
        grid = rasterize_path(obs, center, window_m=12.8)
        feat = model.encoder(Tensor(grid.data))
        seq = motion_features(gt)
        a = [float(v.data) for v in model.decode_graph(
            feat, grid, model.temporal_encode(seq), 4, gt.detections[4])]
        flipped = seq[::-1].copy()
        b = [float(v.data) for v in model.decode_graph(
            feat, grid, model.temporal_encode(flipped), 4, gt.detections[4])]
        assert not np.allclose(a, b)

    def test_decode_rejects_center_outside_window(self):
        model = PathModel(seed=9)
        obs = toy_obs([(0.0, 0.0, 0.1, 0.0, 0)], window=(0,))
        grid = rasterize_path(obs, (0.0, 0.0), window_m=12.8)
        feat = model.encoder(Tensor(grid.data))
        f_motion = model.temporal_encode(np.zeros((1, 3)))
        far = det(50.0, 0.0, 0.0, 0)
        with pytest.raises(ValueError):
            model.decode_graph(feat, grid, f_motion, 0, far)


class TestApplyRefinement:
    def test_zero_delta_is_identity(self):
        d = det(3.0, -2.0, 0.4, 4, theta=1.1)
        out = apply_pose_refinement(d, PoseDelta(0.0, 0.0, 0.0))
        assert out.pose == d.pose and out.size == d.size

    def test_normalized_offset_definition(self):
        d = det(5.0, 7.0, 0.0, 0, w=2.0, l=4.0)
        out = apply_pose_refinement(d, PoseDelta(0.1, 0.0, 0.0))
        assert out.pose.x == pytest.approx(5.4, abs=1e-12)
        assert out.pose.y == pytest.approx(7.0, abs=1e-12)
        out2 = apply_pose_refinement(d, PoseDelta(0.0, 0.25, 0.0))
        assert out2.pose.y == pytest.approx(7.5, abs=1e-12)

    def test_se2_equivariance(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            d = det(*rng.uniform(-20, 20, 2), 0.0, 0,
                    theta=rng.uniform(-3, 3), w=1.8, l=4.3)
            delta = PoseDelta(*rng.normal(0.0, 0.2, 3))
            phi, tx, ty = rng.uniform(-3, 3), *rng.uniform(-30, 30, 2)
            c, s = math.cos(phi), math.sin(phi)

            def move(p):
                return Pose2D(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty,
                              wrap_angle(p.theta + phi))

            a = move(apply_pose_refinement(d, delta).pose)
            from dataclasses import replace
            b = apply_pose_refinement(replace(d, pose=move(d.pose)), delta).pose
            assert abs(a.x - b.x) < 1e-9
            assert abs(a.y - b.y) < 1e-9
            assert abs(wrap_angle(a.theta - b.theta)) < 1e-9

    def test_literal_form_depends_on_world_origin(self):
        d1 = det(10.0, 0.0, 0.0, 0)
        d2 = det(100.0, 0.0, 0.0, 0)
        delta = PoseDelta(0.01, 0.0, 0.0)
        m1 = apply_pose_refinement(d1, delta, literal_eq7=True).pose.x - 10.0
        m2 = apply_pose_refinement(d2, delta, literal_eq7=True).pose.x - 100.0
        assert m1 == pytest.approx(0.1, abs=1e-12)
        assert m2 == pytest.approx(1.0, abs=1e-12)
        # the same delta moves the box ten times farther at 10x the distance,
        # which is why the normalized form is the default
        n1 = apply_pose_refinement(d1, delta).pose.x - 10.0
        n2 = apply_pose_refinement(d2, delta).pose.x - 100.0
        assert n1 == pytest.approx(n2, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            apply_pose_refinement(det(0.0, 0.0, 0.0, 0),
                                  PoseDelta(float("nan"), 0.0, 0.0))


class TestRefineTrajectory:
    def test_static_broadcast_single_pose(self):
        scene = scene_with([static_vehicle()])
        gt = scene.gt_trajectories[0]
        # give frames distinct scores; frame 6 wins
        from dataclasses import replace
        dets = [replace(d, score=0.9 if d.frame_idx == 6 else 0.4)
                for d in gt.detections]
        tr = Trajectory(0, dets, static_flag=True)
        model = PathModel(seed=11)
        out = model.refine_trajectory(scene, tr)
        poses = {(d.pose.x, d.pose.y, d.pose.theta) for d in out.detections}
        assert len(poses) == 1
        # zero head: the broadcast pose is exactly the argmax frame's pose
        assert out.detections[0].pose == dets[6].pose
        assert [d.t for d in out.detections] == [d.t for d in dets]
        assert [d.frame_idx for d in out.detections] == [d.frame_idx for d in dets]

    def test_short_moving_trajectory_single_window(self):
        scene = scene_with([moving_vehicle()], n_frames=8)
        gt = scene.gt_trajectories[0]
        model = PathModel(seed=12)
        out = model.refine_trajectory(scene, gt, static=False)
        assert len(out) == len(gt)
        for a, b in zip(gt.detections, out.detections):
            assert b.pose == a.pose  # zero head, single window
            assert b.size == a.size

    def test_overlap_deltas_are_averaged(self):
        scene = scene_with([moving_vehicle(speed=5.0, n_frames=20)], n_frames=20)
        gt = scene.gt_trajectories[0]
        assert len(gt) == 20
        model = PathModel(seed=13)
        rng = np.random.default_rng(14)
        model.params["path_head.1.w"].data[...] = rng.normal(
            0.0, 0.1, model.params["path_head.1.w"].shape)
        out = model.refine_trajectory(scene, gt, static=False)

        f_motion = model.temporal_encode(motion_features(gt))
        acc = np.zeros((20, 3))
        hits = np.zeros(20)
        for lo in (0, 5, 10):
            for pos, _, trip in model.decode_window(scene, gt, lo, lo + 10, f_motion):
                acc[pos] += [float(v.data) for v in trip]
                hits[pos] += 1
        acc /= hits[:, None]
        want = [
            apply_pose_refinement(d, PoseDelta(*acc[i]))
            for i, d in enumerate(gt.detections)
        ]
        for a, b in zip(want, out.detections):
            assert abs(a.pose.x - b.pose.x) < 1e-12
            assert abs(a.pose.y - b.pose.y) < 1e-12
            assert abs(a.pose.theta - b.pose.theta) < 1e-12

    def test_frame_set_timestamps_sizes_preserved(self):
        scene = scene_with([moving_vehicle()], n_frames=14)
        gt = scene.gt_trajectories[0]
        model = PathModel(seed=15)
        rng = np.random.default_rng(16)
        model.params["path_head.1.w"].data[...] = rng.normal(
            0.0, 0.1, model.params["path_head.1.w"].shape)
        out = model.refine_trajectory(scene, gt, static=False)
        assert [d.frame_idx for d in out.detections] == [d.frame_idx for d in gt.detections]
        assert [d.t for d in out.detections] == [d.t for d in gt.detections]
        assert all(a.size == b.size for a, b in zip(gt.detections, out.detections))


class TestClassifyStatic:
    def test_noisy_parked_vehicles_read_static(self):
        rng = np.random.default_rng(17)
        hits = 0
        for trial in range(40):
            cx, cy = rng.uniform(-20, 20, 2)
            th = rng.uniform(-3, 3)
            dets = [
                det(cx + rng.normal(0, 0.12), cy + rng.normal(0, 0.12),
                    0.1 * k, k, theta=th)
                for k in range(40)
            ]
            if classify_static(Trajectory(0, dets)):
                hits += 1
        assert hits >= 38  # 95% target

    def test_constant_speed_reads_moving(self):
        dets = [det(0.5 * k, 0.0, 0.1 * k, k) for k in range(30)]
        assert classify_static(Trajectory(0, dets)) is False

    def test_zero_threshold_everything_moving(self):
        dets = [det(1.0, 2.0, 0.1 * k, k) for k in range(10)]
        assert classify_static(Trajectory(0, dets), threshold=0.0) is False
        assert classify_static(Trajectory(0, dets[:1]), threshold=0.0) is False

    def test_single_detection_defaults_static(self):
        dets = [det(1.0, 2.0, 0.0, 0)]
        assert classify_static(Trajectory(0, dets)) is True
