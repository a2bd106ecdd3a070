"""Planar obstacle primitives and penetration queries.

Obstacles are axis-aligned rectangles and circles. Penetration is strict:
a point exactly on a boundary has depth 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by center and half-extents (meters)."""

    center: tuple[float, float]
    half_extents: tuple[float, float]

    def contains(self, point: np.ndarray) -> bool:
        return self.penetration(point) > 0.0

    def penetration(self, point: np.ndarray) -> float:
        dx = abs(float(point[0]) - self.center[0])
        dy = abs(float(point[1]) - self.center[1])
        hx, hy = self.half_extents
        if dx < hx and dy < hy:
            return min(hx - dx, hy - dy)
        return 0.0


@dataclass(frozen=True)
class Circle:
    """Circle given by center (meters) and radius (meters)."""

    center: tuple[float, float]
    radius: float

    def contains(self, point: np.ndarray) -> bool:
        return self.penetration(point) > 0.0

    def penetration(self, point: np.ndarray) -> float:
        d = float(np.hypot(point[0] - self.center[0], point[1] - self.center[1]))
        if d < self.radius:
            return self.radius - d
        return 0.0


Obstacle = Union[Rect, Circle]


def max_penetration(point: np.ndarray, obstacles: Sequence[Obstacle]) -> float:
    """Deepest penetration of a point into any obstacle (0 if outside all)."""
    depth = 0.0
    for obs in obstacles:
        d = obs.penetration(point)
        if d > depth:
            depth = d
    return depth


def segment_hits_circle(p0: np.ndarray, p1: np.ndarray, circle: Circle) -> bool:
    c = np.array(circle.center, dtype=float)
    d = p1 - p0
    len2 = float(d @ d)
    if len2 == 0.0:
        return circle.contains(p0)
    t = float(np.clip((c - p0) @ d / len2, 0.0, 1.0))
    closest = p0 + t * d
    return float(np.hypot(*(closest - c))) < circle.radius


def segment_hits_rect(p0: np.ndarray, p1: np.ndarray, rect: Rect) -> bool:
    # Liang-Barsky slab clipping against the AABB.
    lo = np.array(rect.center) - np.array(rect.half_extents)
    hi = np.array(rect.center) + np.array(rect.half_extents)
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for axis in range(2):
        if d[axis] == 0.0:
            if p0[axis] <= lo[axis] or p0[axis] >= hi[axis]:
                return False
        else:
            ta = (lo[axis] - p0[axis]) / d[axis]
            tb = (hi[axis] - p0[axis]) / d[axis]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 >= t1:
                return False
    return True


def segment_hits(p0: np.ndarray, p1: np.ndarray, obstacles: Sequence[Obstacle]) -> bool:
    """True if the open segment from p0 to p1 passes through any obstacle interior."""
    for obs in obstacles:
        if isinstance(obs, Circle):
            if segment_hits_circle(p0, p1, obs):
                return True
        else:
            if segment_hits_rect(p0, p1, obs):
                return True
    return False
