"""SE(2) poses, rotated BEV boxes, exact polygon IoU, and corner-aligned resizing.

All functions are pure; the hot paths (clipping, IoU, point-in-box) dispatch
to :mod:`auto4d.kernels`.
"""

import math
from dataclasses import dataclass

import numpy as np

from auto4d import kernels

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    t = math.remainder(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    return t


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in meters, heading in radians, normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class Size2D:
    """BEV box size; `l` is measured along the heading axis."""

    w: float
    l: float

    def __post_init__(self):
        if not (self.w > 0.0 and self.l > 0.0):
            raise ValueError(f"box size must be positive, got w={self.w}, l={self.l}")

    @property
    def area(self) -> float:
        return self.w * self.l


@dataclass(frozen=True)
class BoxBEV:
    """Rotated bounding box in the bird's eye view."""

    pose: Pose2D
    size: Size2D


def se2_compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Compose two SE(2) transforms: rotate b's translation by a, then add."""
    c = math.cos(a.theta)
    s = math.sin(a.theta)
    return Pose2D(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def se2_inverse(p: Pose2D) -> Pose2D:
    c = math.cos(p.theta)
    s = math.sin(p.theta)
    return Pose2D(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.theta)


def world_to_object(points: np.ndarray, box_pose: Pose2D) -> np.ndarray:
    """Express 3D/4D points in the frame centered at the box with x along heading.

    Only the first two columns are transformed; z (and t, if present) pass
    through untouched.
    """
    points = np.asarray(points, dtype=np.float64)
    out = points.copy()
    c = math.cos(box_pose.theta)
    s = math.sin(box_pose.theta)
    dx = points[:, 0] - box_pose.x
    dy = points[:, 1] - box_pose.y
    out[:, 0] = c * dx + s * dy
    out[:, 1] = -s * dx + c * dy
    return out


def object_to_world(points: np.ndarray, box_pose: Pose2D) -> np.ndarray:
    """Inverse of :func:`world_to_object`."""
    points = np.asarray(points, dtype=np.float64)
    out = points.copy()
    c = math.cos(box_pose.theta)
    s = math.sin(box_pose.theta)
    out[:, 0] = box_pose.x + c * points[:, 0] - s * points[:, 1]
    out[:, 1] = box_pose.y + s * points[:, 0] + c * points[:, 1]
    return out


def box_corners(box: BoxBEV) -> np.ndarray:
    """4 CCW corners, corner 0 at (+l/2, +w/2) in the object frame."""
    return kernels.box_corners(box.pose.x, box.pose.y, box.pose.theta, box.size.w, box.size.l)


# Object-frame sign pattern (along, across) of each corner, in box_corners order.
_CORNER_SIGNS = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))


def points_in_box(points: np.ndarray, box: BoxBEV, scale: float = 1.0) -> np.ndarray:
    """Rows of `points` whose world xy lies inside the box scaled by `scale`.

    z/t columns are ignored for the test but preserved in the output.
    """
    points = np.asarray(points)
    if points.shape[0] == 0:
        return points.copy()
    mask = kernels.points_in_obb(
        np.ascontiguousarray(points[:, :2], dtype=np.float64),
        box.pose.x,
        box.pose.y,
        box.pose.theta,
        0.5 * scale * box.size.w,
        0.5 * scale * box.size.l,
    )
    return points[mask]


def convex_intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Clip convex CCW polygon `a` against convex CCW polygon `b`."""
    return kernels.clip_convex(a, b)


def polygon_area(poly: np.ndarray) -> float:
    return kernels.polygon_area(poly)


def box_iou_bev(a: BoxBEV, b: BoxBEV) -> float:
    """Exact rotated-box IoU in [0, 1]."""
    return kernels.box_iou(
        a.pose.x, a.pose.y, a.pose.theta, a.size.w, a.size.l,
        b.pose.x, b.pose.y, b.pose.theta, b.size.w, b.size.l,
    )


def closest_corner_index(box: BoxBEV, ego: Pose2D) -> int:
    """Index (box_corners order) of the corner nearest the ego position.

    Ties break toward the lowest index.
    """
    corners = box_corners(box)
    d2 = (corners[:, 0] - ego.x) ** 2 + (corners[:, 1] - ego.y) ** 2
    best = 0
    for i in range(1, 4):
        if d2[i] < d2[best]:
            best = i
    return best


def corner_align_resize(box: BoxBEV, new_size: Size2D, ego: Pose2D) -> BoxBEV:
    """Resize a box while pinning its ego-closest corner in place.

    The anchored corner is selected on the input box; heading is unchanged, so
    the box grows or shrinks away from the ego.
    """
    idx = closest_corner_index(box, ego)
    corner = box_corners(box)[idx]
    s_along, s_across = _CORNER_SIGNS[idx]
    c = math.cos(box.pose.theta)
    s = math.sin(box.pose.theta)
    # center = corner - R(theta) @ (sign_along * l/2, sign_across * w/2)
    du = s_along * 0.5 * new_size.l
    dv = s_across * 0.5 * new_size.w
    cx = corner[0] - (c * du - s * dv)
    cy = corner[1] - (s * du + c * dv)
    return BoxBEV(Pose2D(cx, cy, box.pose.theta), new_size)


def center_align_resize(box: BoxBEV, new_size: Size2D) -> BoxBEV:
    """Resize a box about its center; pose unchanged."""
    return BoxBEV(box.pose, new_size)
