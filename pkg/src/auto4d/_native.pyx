# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry/raycast kernels; contract-identical to auto4d._reference."""

from libc.math cimport cos, sin, fabs, INFINITY

import numpy as np

DEGENERATE_AREA = 1e-12

DEF MAX_VERTS = 16


cdef double _shoelace(double* xs, double* ys, int n) nogil:
    cdef double acc = 0.0
    cdef int i, j
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        acc += xs[i] * ys[j] - xs[j] * ys[i]
    return 0.5 * acc


def polygon_area(poly):
    """Signed shoelace area; positive for counter-clockwise winding."""
    cdef double[:, ::1] p = np.ascontiguousarray(poly, dtype=np.float64)
    cdef int n = p.shape[0]
    if n < 3:
        return 0.0
    cdef double acc = 0.0
    cdef int i, j
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        acc += p[i, 0] * p[j, 1] - p[j, 0] * p[i, 1]
    return 0.5 * acc


def box_corners(double x, double y, double theta, double w, double l):
    """CCW corners of a rotated BEV box; corner 0 is (+l/2, +w/2) in the object frame."""
    out = np.empty((4, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    _fill_corners(x, y, theta, w, l, &o[0, 0])
    return out


cdef void _fill_corners(double x, double y, double theta, double w, double l, double* buf) nogil:
    cdef double c = cos(theta)
    cdef double s = sin(theta)
    cdef double hl = 0.5 * l
    cdef double hw = 0.5 * w
    # corner order: (+hl,+hw), (-hl,+hw), (-hl,-hw), (+hl,-hw) in object frame
    buf[0] = x + c * hl - s * hw
    buf[1] = y + s * hl + c * hw
    buf[2] = x - c * hl - s * hw
    buf[3] = y - s * hl + c * hw
    buf[4] = x - c * hl + s * hw
    buf[5] = y - s * hl - c * hw
    buf[6] = x + c * hl + s * hw
    buf[7] = y + s * hl - c * hw


cdef int _clip(double* sx, double* sy, int ns, double* cx, double* cy, int nc,
               double* ox, double* oy) nogil:
    """Sutherland-Hodgman core on scratch buffers; returns output vertex count."""
    cdef double bufx[MAX_VERTS]
    cdef double bufy[MAX_VERTS]
    cdef double dists[MAX_VERTS]
    cdef int i, j, jn, n_in, n_out
    cdef double ax, ay, ex, ey, dp, dq, t
    n_in = ns
    for i in range(ns):
        ox[i] = sx[i]
        oy[i] = sy[i]
    for i in range(nc):
        if n_in == 0:
            return 0
        ax = cx[i]
        ay = cy[i]
        jn = i + 1
        if jn == nc:
            jn = 0
        ex = cx[jn] - ax
        ey = cy[jn] - ay
        for j in range(n_in):
            bufx[j] = ox[j]
            bufy[j] = oy[j]
            dists[j] = ex * (oy[j] - ay) - ey * (ox[j] - ax)
        n_out = 0
        for j in range(n_in):
            jn = j + 1
            if jn == n_in:
                jn = 0
            dp = dists[j]
            dq = dists[jn]
            if dp >= 0.0:
                ox[n_out] = bufx[j]
                oy[n_out] = bufy[j]
                n_out += 1
                if dq < 0.0:
                    t = dp / (dp - dq)
                    ox[n_out] = bufx[j] + t * (bufx[jn] - bufx[j])
                    oy[n_out] = bufy[j] + t * (bufy[jn] - bufy[j])
                    n_out += 1
            elif dq >= 0.0:
                t = dp / (dp - dq)
                ox[n_out] = bufx[j] + t * (bufx[jn] - bufx[j])
                oy[n_out] = bufy[j] + t * (bufy[jn] - bufy[j])
                n_out += 1
        n_in = n_out
    return n_in


def clip_convex(subject, clip):
    """Sutherland-Hodgman clip of convex CCW `subject` by convex CCW `clip`."""
    cdef double[:, ::1] s = np.ascontiguousarray(subject, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(clip, dtype=np.float64)
    cdef int ns = s.shape[0]
    cdef int nc = c.shape[0]
    cdef double sx[MAX_VERTS]
    cdef double sy[MAX_VERTS]
    cdef double cx[MAX_VERTS]
    cdef double cy[MAX_VERTS]
    cdef double ox[MAX_VERTS]
    cdef double oy[MAX_VERTS]
    cdef int i, n
    if ns > 8 or nc > 8:
        raise ValueError("clip_convex supports up to 8 vertices per polygon")
    for i in range(ns):
        sx[i] = s[i, 0]
        sy[i] = s[i, 1]
    for i in range(nc):
        cx[i] = c[i, 0]
        cy[i] = c[i, 1]
    n = _clip(sx, sy, ns, cx, cy, nc, ox, oy)
    if n < 3 or _shoelace(ox, oy, n) < DEGENERATE_AREA:
        return np.zeros((0, 2), dtype=np.float64)
    out = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        o[i, 0] = ox[i]
        o[i, 1] = oy[i]
    return out


def box_iou(double ax, double ay, double atheta, double aw, double al,
            double bx, double by, double btheta, double bw, double bl):
    """Exact BEV IoU of two rotated boxes via polygon clipping."""
    cdef double area_a = aw * al
    cdef double area_b = bw * bl
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    cdef double ca[8]
    cdef double cb[8]
    cdef double sx[4]
    cdef double sy[4]
    cdef double cx[4]
    cdef double cy[4]
    cdef double ox[MAX_VERTS]
    cdef double oy[MAX_VERTS]
    cdef int i, n
    _fill_corners(ax, ay, atheta, aw, al, ca)
    _fill_corners(bx, by, btheta, bw, bl, cb)
    for i in range(4):
        sx[i] = ca[2 * i]
        sy[i] = ca[2 * i + 1]
        cx[i] = cb[2 * i]
        cy[i] = cb[2 * i + 1]
    n = _clip(sx, sy, 4, cx, cy, 4, ox, oy)
    if n < 3:
        return 0.0
    cdef double inter = _shoelace(ox, oy, n)
    if inter < DEGENERATE_AREA:
        return 0.0
    return inter / (area_a + area_b - inter)


def points_in_obb(xy, double x, double y, double theta, double hw, double hl):
    """Boolean mask of points inside a rotated box (closed boundary)."""
    cdef double[:, ::1] p = np.ascontiguousarray(xy, dtype=np.float64)
    cdef int n = p.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef double c = cos(theta)
    cdef double s = sin(theta)
    cdef double dx, dy, u, v
    cdef int i
    for i in range(n):
        dx = p[i, 0] - x
        dy = p[i, 1] - y
        u = c * dx + s * dy
        v = -s * dx + c * dy
        if fabs(u) <= hl and fabs(v) <= hw:
            o[i] = 1
    return out.view(np.bool_)


def raycast(double ox, double oy, angles, segments, double max_range):
    """Nearest-hit raycast from (ox, oy) against 2D segments (x0, y0, x1, y1)."""
    cdef double[::1] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef double[:, ::1] seg = np.ascontiguousarray(segments, dtype=np.float64)
    cdef int n_rays = ang.shape[0]
    cdef int n_seg = seg.shape[0]
    dist_arr = np.full(n_rays, max_range, dtype=np.float64)
    hit_arr = np.full(n_rays, -1, dtype=np.int64)
    cdef double[::1] dist = dist_arr
    cdef long[::1] hit = hit_arr
    cdef int i, j
    cdef double dx, dy, ex, ey, aox, aoy, denom, t, u, best
    cdef long best_j
    for i in range(n_rays):
        dx = cos(ang[i])
        dy = sin(ang[i])
        best = INFINITY
        best_j = -1
        for j in range(n_seg):
            ex = seg[j, 2] - seg[j, 0]
            ey = seg[j, 3] - seg[j, 1]
            denom = dx * ey - dy * ex
            if fabs(denom) <= 1e-12:
                continue
            aox = seg[j, 0] - ox
            aoy = seg[j, 1] - oy
            t = (aox * ey - aoy * ex) / denom
            u = (aox * dy - aoy * dx) / denom
            if t > 1e-9 and t < max_range and u >= 0.0 and u <= 1.0 and t < best:
                best = t
                best_j = j
        if best_j >= 0:
            dist[i] = best
            hit[i] = best_j
    return dist_arr, hit_arr
