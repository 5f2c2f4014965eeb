"""NumPy fallback for the compiled geometry kernels.

Same contracts as ``auto4d._native``; selected by ``auto4d.kernels`` when the
extension is unavailable or ``AUTO4D_PURE=1`` is set.  Kept intentionally
boring: every function here is mirrored 1:1 in the Cython module and the two
are cross-checked in the test suite.
"""

import numpy as np

# Clipped slivers below this area are numerical noise from touching edges.
DEGENERATE_AREA = 1e-12


def polygon_area(poly):
    """Signed shoelace area; positive for counter-clockwise winding."""
    poly = np.asarray(poly, dtype=np.float64)
    n = poly.shape[0]
    if n < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def box_corners(x, y, theta, w, l):
    """CCW corners of a rotated BEV box; corner 0 is (+l/2, +w/2) in the object frame."""
    c = np.cos(theta)
    s = np.sin(theta)
    hl = 0.5 * l
    hw = 0.5 * w
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]], dtype=np.float64)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    return local @ rot.T + np.array([x, y], dtype=np.float64)


def clip_convex(subject, clip):
    """Sutherland-Hodgman clip of convex CCW `subject` by convex CCW `clip`.

    Returns a (K, 2) array; K = 0 when the polygons are disjoint.
    """
    subject = np.asarray(subject, dtype=np.float64)
    clip = np.asarray(clip, dtype=np.float64)
    output = [tuple(p) for p in subject]
    m = clip.shape[0]
    for i in range(m):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % m]
        ex, ey = bx - ax, by - ay
        inputs = output
        output = []
        k = len(inputs)
        # signed distance to the clip edge; >= 0 means inside (left of edge)
        dists = [ex * (py - ay) - ey * (px - ax) for px, py in inputs]
        for j in range(k):
            px, py = inputs[j]
            qx, qy = inputs[(j + 1) % k]
            dp = dists[j]
            dq = dists[(j + 1) % k]
            if dp >= 0.0:
                output.append((px, py))
                if dq < 0.0:
                    t = dp / (dp - dq)
                    output.append((px + t * (qx - px), py + t * (qy - py)))
            elif dq >= 0.0:
                t = dp / (dp - dq)
                output.append((px + t * (qx - px), py + t * (qy - py)))
    if len(output) < 3:
        return np.zeros((0, 2), dtype=np.float64)
    result = np.array(output, dtype=np.float64)
    if polygon_area(result) < DEGENERATE_AREA:
        return np.zeros((0, 2), dtype=np.float64)
    return result


def box_iou(ax, ay, atheta, aw, al, bx, by, btheta, bw, bl):
    """Exact BEV IoU of two rotated boxes via polygon clipping."""
    area_a = aw * al
    area_b = bw * bl
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    ca = box_corners(ax, ay, atheta, aw, al)
    cb = box_corners(bx, by, btheta, bw, bl)
    inter_poly = clip_convex(ca, cb)
    if inter_poly.shape[0] == 0:
        return 0.0
    inter = polygon_area(inter_poly)
    return inter / (area_a + area_b - inter)


def points_in_obb(xy, x, y, theta, hw, hl):
    """Boolean mask of points inside a rotated box (closed boundary).

    `hw`/`hl` are half extents across/along the heading axis.
    """
    xy = np.asarray(xy, dtype=np.float64)
    if xy.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    c = np.cos(theta)
    s = np.sin(theta)
    dx = xy[:, 0] - x
    dy = xy[:, 1] - y
    u = c * dx + s * dy       # along heading
    v = -s * dx + c * dy      # across heading
    return (np.abs(u) <= hl) & (np.abs(v) <= hw)


def raycast(ox, oy, angles, segments, max_range):
    """Nearest-hit raycast from (ox, oy) against a set of 2D segments.

    segments is (E, 4) rows (x0, y0, x1, y1).  Returns (dist, seg_index)
    arrays over rays; seg_index = -1 and dist = max_range on miss.
    """
    angles = np.asarray(angles, dtype=np.float64)
    segments = np.asarray(segments, dtype=np.float64)
    n_rays = angles.shape[0]
    dist = np.full(n_rays, max_range, dtype=np.float64)
    hit = np.full(n_rays, -1, dtype=np.int64)
    if segments.shape[0] == 0:
        return dist, hit
    dxy = np.stack([np.cos(angles), np.sin(angles)], axis=1)       # (R, 2)
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a                                       # (E, 2)
    ao = a - np.array([ox, oy])                                    # (E, 2)
    denom = dxy[:, 0:1] * e[:, 1] - dxy[:, 1:2] * e[:, 0]          # (R, E)
    cross_ae = ao[:, 0] * e[:, 1] - ao[:, 1] * e[:, 0]             # (E,)
    cross_ad = dxy[:, 0:1] * ao[:, 1] - dxy[:, 1:2] * ao[:, 0]     # (R, E)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_ae / denom
        u = -cross_ad / denom
    valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0) & (t < max_range)
    t = np.where(valid, t, np.inf)
    best = np.argmin(t, axis=1)
    best_t = t[np.arange(n_rays), best]
    found = np.isfinite(best_t)
    dist[found] = best_t[found]
    hit[found] = best[found]
    return dist, hit
