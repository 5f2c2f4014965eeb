"""Backend selection for the geometry/raycast kernels.

Prefers the compiled extension; falls back to the NumPy reference
implementation when the extension is missing or ``AUTO4D_PURE=1`` is set.
Both backends expose the same functions and agree bit-for-bit up to float
rounding (see tests/test_kernels.py).
"""

import os

from auto4d import _reference

if os.environ.get("AUTO4D_PURE") == "1":
    _impl = _reference
else:
    try:
        from auto4d import _native as _impl
    except ImportError:
        _impl = _reference

BACKEND = "native" if _impl is not _reference else "reference"

polygon_area = _impl.polygon_area
box_corners = _impl.box_corners
clip_convex = _impl.clip_convex
box_iou = _impl.box_iou
points_in_obb = _impl.points_in_obb
raycast = _impl.raycast
DEGENERATE_AREA = _impl.DEGENERATE_AREA
