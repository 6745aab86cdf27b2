"""Axis-aligned box primitives shared by guidance, post-optimization and metrics.

Oriented boxes (center, half-extents, yaw) are always reduced to their
axis-aligned enclosing box before overlap computations. This keeps every
downstream quantity piecewise-analytic and conservative: the enclosing box
never under-reports a collision or a footprint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box3:
    """Closed axis-aligned box given by its min and max corners (meters)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != (3,) or self.hi.shape != (3,):
            raise ValueError("Box3 corners must be 3-vectors")

    @property
    def extents(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return float(np.prod(np.maximum(self.extents, 0.0)))

    def contains_box(self, other: "Box3", tol: float = 1e-12) -> bool:
        return bool(np.all(self.lo <= other.lo + tol) and np.all(self.hi >= other.hi - tol))


def rotated_half_extents(size: np.ndarray, yaw: float) -> np.ndarray:
    """Half-extents of the axis-aligned box enclosing an oriented box.

    ``size`` holds the oriented half-extents; yaw rotates about the vertical
    (z) axis, so only x/y mix.
    """
    sx, sy, sz = float(size[0]), float(size[1]), float(size[2])
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    return np.array([sx * c + sy * s, sx * s + sy * c, sz])


def aabb_of_oriented(center: np.ndarray, size: np.ndarray, yaw: float) -> Box3:
    """Axis-aligned enclosing box of an oriented box."""
    center = np.asarray(center, dtype=float)
    h = rotated_half_extents(np.asarray(size, dtype=float), yaw)
    return Box3(center - h, center + h)


def yaw_rotate(vec: np.ndarray, yaw: float) -> np.ndarray:
    """Rotate a 3-vector about the vertical axis by ``yaw`` radians."""
    c, s = math.cos(yaw), math.sin(yaw)
    x, y, z = float(vec[0]), float(vec[1]), float(vec[2])
    return np.array([c * x - s * y, s * x + c * y, z])


def sweep_offsets(direction: np.ndarray, depth: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis (lo, hi) face offsets for sweeping a box along a direction.

    Sweeping a box by ``depth`` along unit vector ``direction`` moves each
    face outward on the side the direction points to:
    lo' = lo + min(0, depth * d), hi' = hi + max(0, depth * d).
    """
    d = np.asarray(direction, dtype=float) * float(depth)
    return np.minimum(0.0, d), np.maximum(0.0, d)


def extend_box(box: Box3, direction: np.ndarray, depth: float) -> Box3:
    """Enclosing box of ``box`` swept along ``direction`` by ``depth`` meters."""
    lo_off, hi_off = sweep_offsets(direction, depth)
    return Box3(box.lo + lo_off, box.hi + hi_off)


def intersection_volume(a: Box3, b: Box3) -> float:
    overlap = np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo)
    if np.any(overlap <= 0.0):
        return 0.0
    return float(np.prod(overlap))


def iou3d(a: Box3, b: Box3) -> float:
    """3D intersection over union of two axis-aligned boxes."""
    inter = intersection_volume(a, b)
    if inter == 0.0:
        return 0.0
    union = a.volume() + b.volume() - inter
    return inter / union if union > 0.0 else 0.0


def polygon_area(points: np.ndarray) -> float:
    """Signed-area magnitude of a simple polygon (shoelace)."""
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_is_simple(points: np.ndarray, tol: float = 1e-12) -> bool:
    """True when no two non-adjacent edges of the polygon intersect."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        return False

    def cross2(u, v) -> float:
        return float(u[0] * v[1] - u[1] * v[0])

    def seg_intersect(p, q, r, s) -> bool:
        d1 = cross2(q - p, r - p)
        d2 = cross2(q - p, s - p)
        d3 = cross2(s - r, p - r)
        d4 = cross2(s - r, q - r)
        if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
            (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
        ):
            return True
        return False

    for i in range(n):
        for j in range(i + 1, n):
            # Skip adjacent edges (they share an endpoint).
            if abs(i - j) in (0, 1) or (i == 0 and j == n - 1):
                continue
            if seg_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return False
    return True


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Vectorized even-odd point-in-polygon test.

    Boundary points are classified by the crossing rule; callers that care
    about the boundary should offset their sample points (grid cell centers
    already avoid exact edges in practice).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    poly = np.asarray(polygon, dtype=float)
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        crosses = (y0 > ys) != (y1 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (xs < np.where(crosses, x_at, np.inf))
    return inside


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    out = math.remainder(theta, 2.0 * math.pi)
    if out >= math.pi:
        out -= 2.0 * math.pi
    if out < -math.pi:
        out += 2.0 * math.pi
    return out
