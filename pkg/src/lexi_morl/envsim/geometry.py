"""Planar geometry helpers (vectorised over points where it matters)."""
from __future__ import annotations

import numpy as np


def point_segment_distance(points, a, b):
    """Distance from each of ``points`` [N,2] to segment ``a``-``b``."""
    p = np.asarray(points, dtype=float)
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    dd = float(d @ d)
    t = np.zeros(len(p)) if dd == 0 else np.clip((p - a) @ d / dd, 0.0, 1.0)
    foot = a + t[:, None] * d
    return np.hypot(*(p - foot).T), foot


def in_rects(points, rects):
    """Boolean mask of points inside any axis-aligned rect (xmin, ymin, xmax, ymax)."""
    p = np.asarray(points, dtype=float)
    mask = np.zeros(len(p), dtype=bool)
    for x0, y0, x1, y1 in rects:
        mask |= (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
    return mask


def rect_corners(center, heading, length, width):
    c, s = np.cos(heading), np.sin(heading)
    f = np.array([c, s]) * (length / 2)
    l = np.array([-s, c]) * (width / 2)
    center = np.asarray(center, dtype=float)
    return np.array([center + f + l, center - f + l, center - f - l, center + f - l])


def discs_hit_rect(centers, radius, rect_center, heading, length, width):
    """Which discs overlap the oriented rectangle (closest-point test)."""
    rel = np.asarray(centers, dtype=float).reshape(-1, 2) - rect_center
    c, s = np.cos(heading), np.sin(heading)
    x = rel[:, 0] * c + rel[:, 1] * s
    y = -rel[:, 0] * s + rel[:, 1] * c
    # np.minimum/np.maximum instead of np.clip: same values, far less call overhead
    dx = x - np.minimum(np.maximum(x, -length / 2), length / 2)
    dy = y - np.minimum(np.maximum(y, -width / 2), width / 2)
    return dx * dx + dy * dy <= radius * radius


def obb_overlaps_aabb(corners, rect) -> bool:
    """Separating-axis test between an oriented box (4 corners) and an axis-aligned rect."""
    x0, y0, x1, y1 = rect
    if corners[:, 0].max() < x0 or corners[:, 0].min() > x1:
        return False
    if corners[:, 1].max() < y0 or corners[:, 1].min() > y1:
        return False
    box = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    for edge in (corners[1] - corners[0], corners[2] - corners[1]):
        axis = np.array([-edge[1], edge[0]])
        pa, pb = corners @ axis, box @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def wrap_degrees(angle_deg):
    """Wrap to [-180, 180)."""
    return (np.asarray(angle_deg) + 180.0) % 360.0 - 180.0


class Polyline:
    """Arc-length parametrised polyline used for the ego route."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two 2-D points")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0):
            raise ValueError("polyline has repeated consecutive points")
        self.points = pts
        self.seg = seg
        self.seg_len = lengths
        self.cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self.cum[-1])
        self.headings = np.arctan2(seg[:, 1], seg[:, 0])
        self._inv_len2 = 1.0 / lengths**2

    def locate(self, s: float) -> tuple[np.ndarray, float]:
        """Position and tangent heading at arc length ``s`` (clamped to the ends)."""
        s = min(max(s, 0.0), self.length)
        k = int(np.searchsorted(self.cum, s, side="right")) - 1
        k = min(max(k, 0), len(self.seg) - 1)
        t = (s - self.cum[k]) / self.seg_len[k]
        return self.points[k] + t * self.seg[k], float(self.headings[k])

    def project(self, points):
        """Arc length and signed lateral offset (left positive) of the nearest route point."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(p) == 0:
            return np.zeros(0), np.zeros(0)
        ax, ay = self.points[:-1, 0], self.points[:-1, 1]
        sx, sy = self.seg[:, 0], self.seg[:, 1]
        rx = p[:, 0:1] - ax
        ry = p[:, 1:2] - ay
        t = np.minimum(np.maximum((rx * sx + ry * sy) * self._inv_len2, 0.0), 1.0)
        dx = rx - t * sx
        dy = ry - t * sy
        dist2 = dx * dx + dy * dy
        k = np.argmin(dist2, axis=1)
        rows = np.arange(len(p))
        s = self.cum[k] + t[rows, k] * self.seg_len[k]
        cross = sx[k] * dy[rows, k] - sy[k] * dx[rows, k]
        lateral = np.sign(cross) * np.sqrt(dist2[rows, k])
        return s, lateral
