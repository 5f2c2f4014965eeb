"""Differentiable rotated-box IoU loss.

Re-runs the polygon-clipping construction on scalar graph nodes so gradients
flow through intersection vertices; the clip structure (which vertices
survive, where edges cross) is fixed by the forward values, giving the
piecewise-smooth one-sided semantics at degeneracies.  Disjoint boxes fall
back to smooth-l1 on (x, y, sin, cos, w, l).
"""

import numpy as np

from auto4d import kernels
from auto4d.geometry import BoxBEV
from auto4d.nn.tensor import as_tensor

_CORNER_SIGNS = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))


def _box_params(box):
    if isinstance(box, BoxBEV):
        return (box.pose.x, box.pose.y, box.pose.theta, box.size.w, box.size.l)
    return tuple(box)


def _corners_graph(x, y, theta, w, l):
    c = theta.cos()
    s = theta.sin()
    hl = l * 0.5
    hw = w * 0.5
    out = []
    for sa, sb in _CORNER_SIGNS:
        out.append((x + c * (hl * sa) - s * (hw * sb), y + s * (hl * sa) + c * (hw * sb)))
    return out


def _clip_graph(subject, clip_pts):
    out = subject
    m = clip_pts.shape[0]
    for i in range(m):
        if not out:
            return []
        ax, ay = float(clip_pts[i, 0]), float(clip_pts[i, 1])
        bx, by = float(clip_pts[(i + 1) % m, 0]), float(clip_pts[(i + 1) % m, 1])
        ex, ey = bx - ax, by - ay
        dists = [ex * (py - ay) - ey * (px - ax) for px, py in out]
        nxt = []
        k = len(out)
        for j in range(k):
            jn = (j + 1) % k
            dp, dq = dists[j], dists[jn]
            dpv, dqv = float(dp.data), float(dq.data)
            px, py = out[j]
            qx, qy = out[jn]
            if dpv >= 0.0:
                nxt.append((px, py))
                if dqv < 0.0:
                    t = dp / (dp - dq)
                    nxt.append((px + t * (qx - px), py + t * (qy - py)))
            elif dqv >= 0.0:
                t = dp / (dp - dq)
                nxt.append((px + t * (qx - px), py + t * (qy - py)))
        out = nxt
    return out


def _shoelace_graph(pts):
    acc = None
    k = len(pts)
    for i in range(k):
        j = (i + 1) % k
        term = pts[i][0] * pts[j][1] - pts[j][0] * pts[i][1]
        acc = term if acc is None else acc + term
    return acc * 0.5


def _smooth_l1_scalar(d, beta):
    v = float(d.data)
    if abs(v) < beta:
        return d * d * (0.5 / beta)
    if v >= 0.0:
        return d - 0.5 * beta
    return (-d) - 0.5 * beta


def iou_loss(pred_box, gt_box, beta=1.0):
    """-ln(IoU) when the boxes overlap, smooth-l1 on parameters otherwise.

    pred_box: 5 scalars (x, y, theta, w, l), any of them graph nodes;
    gt_box: BoxBEV or plain 5-tuple treated as constant.  Returns a scalar
    graph node; non-negative, exactly zero iff the boxes coincide.
    """
    px, py, ptheta, pw, pl = [as_tensor(v) for v in _box_params(pred_box)]
    gx, gy, gtheta, gw, gl = [float(v) for v in _box_params(gt_box)]
    vals = [float(t.data) for t in (px, py, ptheta, pw, pl)] + [gx, gy, gtheta, gw, gl]
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite box parameters")
    if float(pw.data) <= 0.0 or float(pl.data) <= 0.0 or gw <= 0.0 or gl <= 0.0:
        raise ValueError("box sizes must be positive")

    iou_fwd = kernels.box_iou(
        float(px.data), float(py.data), float(ptheta.data), float(pw.data), float(pl.data),
        gx, gy, gtheta, gw, gl,
    )
    gt_corners = kernels.box_corners(gx, gy, gtheta, gw, gl)
    if iou_fwd > 0.0:
        pred_corners = _corners_graph(px, py, ptheta, pw, pl)
        clipped = _clip_graph(pred_corners, gt_corners)
        if len(clipped) >= 3:
            inter = _shoelace_graph(clipped)
            area_p = _shoelace_graph(pred_corners)
            area_g = kernels.polygon_area(gt_corners)
            iou = inter / (area_p + area_g - inter)
            iou = iou.clamp_max(1.0).clamp_min(1e-9)
            return -iou.log()

    sth, cth = ptheta.sin(), ptheta.cos()
    diffs = [
        px - gx,
        py - gy,
        sth - np.sin(gtheta),
        cth - np.cos(gtheta),
        pw - gw,
        pl - gl,
    ]
    loss = None
    for d in diffs:
        term = _smooth_l1_scalar(d, beta)
        loss = term if loss is None else loss + term
    return loss
