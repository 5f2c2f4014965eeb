"""Constant-velocity Kalman smoothing of trajectories (RTS backward pass)."""

from dataclasses import replace

import numpy as np

from auto4d.geometry import Pose2D, wrap_angle
from auto4d.trajectory import Trajectory


def _cv_rts(ts, zs, q, r):
    """Smooth measurements zs (T, d) under a constant-velocity model.

    State is [position(d), velocity(d)]; q is the white-acceleration
    spectral density and r the measurement noise std.  Returns (T, d)
    smoothed positions.
    """
    ts = np.asarray(ts, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    n, d = zs.shape
    eye = np.eye(d)
    zero = np.zeros((d, d))
    h = np.hstack([eye, zero])
    rmat = (r * r) * eye

    dt0 = ts[1] - ts[0]
    x = np.concatenate([zs[0], (zs[1] - zs[0]) / dt0])
    p = np.zeros((2 * d, 2 * d))
    p[:d, :d] = rmat
    p[d:, d:] = (2.0 * (r / dt0)) ** 2 * eye + q * dt0 * eye

    xf = np.zeros((n, 2 * d))
    pf = np.zeros((n, 2 * d, 2 * d))
    xp = np.zeros((n, 2 * d))
    pp = np.zeros((n, 2 * d, 2 * d))
    fs = np.zeros((n, 2 * d, 2 * d))

    for k in range(n):
        if k == 0:
            f = np.eye(2 * d)
            x_pred, p_pred = x, p
        else:
            dt = ts[k] - ts[k - 1]
            f = np.eye(2 * d)
            f[:d, d:] = dt * eye
            qk = np.zeros((2 * d, 2 * d))
            qk[:d, :d] = q * dt ** 3 / 3.0 * eye
            qk[:d, d:] = qk[d:, :d] = q * dt ** 2 / 2.0 * eye
            qk[d:, d:] = q * dt * eye
            x_pred = f @ xf[k - 1]
            p_pred = f @ pf[k - 1] @ f.T + qk
        fs[k] = f
        xp[k], pp[k] = x_pred, p_pred
        s = h @ p_pred @ h.T + rmat
        gain = np.linalg.solve(s.T, (p_pred @ h.T).T).T
        xf[k] = x_pred + gain @ (zs[k] - h @ x_pred)
        pf[k] = (np.eye(2 * d) - gain @ h) @ p_pred

    xs = xf.copy()
    for k in range(n - 2, -1, -1):
        g = np.linalg.solve(pp[k + 1].T, (pf[k] @ fs[k + 1].T).T).T
        xs[k] = xf[k] + g @ (xs[k + 1] - xp[k + 1])
    return xs[:, :d]


def kalman_smooth(
    traj: Trajectory,
    q_pos: float = 2.0,
    r_pos: float = 0.15,
    q_theta: float = 0.4,
    r_theta: float = 0.05,
) -> Trajectory:
    """Smooth (x, y) and heading of a trajectory; sizes and scores untouched.

    Heading is unwrapped first so the linear model never sees the ±pi seam.
    Trajectories with fewer than two detections come back unchanged.
    """
    if len(traj) < 2:
        return traj
    ts = np.array([d.t for d in traj.detections])
    xy = np.array([[d.pose.x, d.pose.y] for d in traj.detections])
    th = np.unwrap(np.array([d.pose.theta for d in traj.detections]))
    xy_s = _cv_rts(ts, xy, q_pos, r_pos)
    th_s = _cv_rts(ts, th[:, None], q_theta, r_theta)[:, 0]
    dets = [
        replace(d, pose=Pose2D(xy_s[k, 0], xy_s[k, 1], wrap_angle(th_s[k])))
        for k, d in enumerate(traj.detections)
    ]
    return Trajectory(traj.id, dets, traj.static_flag)
