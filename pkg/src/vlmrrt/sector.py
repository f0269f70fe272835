"""Compass directions and circular-sector sampling regions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .env import Point2, Rect, point_in_rect


class CompassDirection(Enum):
    # declaration order is clockwise from north; tie-breaking relies on it
    N = "N"
    NE = "NE"
    E = "E"
    SE = "SE"
    S = "S"
    SW = "SW"
    W = "W"
    NW = "NW"

    @property
    def angle(self) -> float:
        """World-frame heading in radians, east = 0, counter-clockwise."""
        return _ANGLES[self]

    def to_angle(self) -> float:
        return _ANGLES[self]

    @property
    def unit(self) -> tuple[float, float]:
        a = _ANGLES[self]
        return math.cos(a), math.sin(a)

    @classmethod
    def parse(cls, token: str) -> "CompassDirection":
        return cls(token.strip().upper())

    @classmethod
    def nearest(cls, angle: float) -> "CompassDirection":
        """Compass point closest to ``angle``; ties go clockwise-first from N."""
        best, best_diff = None, math.inf
        for d in cls:
            diff = abs(wrap_angle(angle - d.angle))
            if diff < best_diff - 1e-12:
                best, best_diff = d, diff
        return best


_ANGLES = {
    CompassDirection.E: 0.0,
    CompassDirection.NE: math.pi / 4,
    CompassDirection.N: math.pi / 2,
    CompassDirection.NW: 3 * math.pi / 4,
    CompassDirection.W: math.pi,
    CompassDirection.SW: -3 * math.pi / 4,
    CompassDirection.S: -math.pi / 2,
    CompassDirection.SE: -math.pi / 4,
}


def wrap_angle(a: float) -> float:
    """Wrap to ``(-pi, pi]``."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class Sector:
    apex: Point2
    direction: float  # radians
    radius: float
    aperture: float  # radians, full angular width

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sector radius must be positive")
        if not 0 < self.aperture <= 2 * math.pi:
            raise ValueError("sector aperture must lie in (0, 2*pi]")

    def contains(self, p, tol: float = 1e-9) -> bool:
        dx, dy = p[0] - self.apex[0], p[1] - self.apex[1]
        rho = math.hypot(dx, dy)
        if rho > self.radius + tol:
            return False
        if rho == 0.0:
            return True
        return abs(wrap_angle(math.atan2(dy, dx) - self.direction)) <= 0.5 * self.aperture + tol


def sample_sector(rng, sector: Sector, bounds: Rect, max_rejections: int = 50) -> tuple[Point2, bool]:
    """Area-uniform draw from ``sector ∩ bounds``.

    Returns ``(point, fallback)``. After ``max_rejections`` out-of-bounds draws
    the point is a uniform sample over ``bounds`` and ``fallback`` is True.
    """
    half = 0.5 * sector.aperture
    for _ in range(max_rejections + 1):
        rho = sector.radius * math.sqrt(rng.random())
        phi = sector.direction + (2.0 * rng.random() - 1.0) * half
        p = Point2(sector.apex[0] + rho * math.cos(phi), sector.apex[1] + rho * math.sin(phi))
        if point_in_rect(p, bounds):
            return p, False
    u = rng.random()
    v = rng.random()
    return Point2(bounds.min.x + u * bounds.width, bounds.min.y + v * bounds.height), True
