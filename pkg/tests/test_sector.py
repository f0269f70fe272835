import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import WORLD, rect
from vlmrrt.env import Point2
from vlmrrt.sector import CompassDirection, Sector, sample_sector, wrap_angle


def test_compass_angles_and_order():
    assert [d.value for d in CompassDirection] == ["N", "NE", "E", "SE", "S", "SW", "W", "NW"]
    assert CompassDirection.N.angle == pytest.approx(math.pi / 2)
    assert CompassDirection.SW.unit == pytest.approx((-math.sqrt(0.5), -math.sqrt(0.5)))
    assert CompassDirection.parse(" ne ") is CompassDirection.NE
    with pytest.raises(ValueError):
        CompassDirection.parse("NNE")


def test_nearest_and_ties():
    assert CompassDirection.nearest(0.1) is CompassDirection.E
    assert CompassDirection.nearest(math.pi) is CompassDirection.W
    assert CompassDirection.nearest(-math.pi + 1e-9) is CompassDirection.W
    # exactly between N and NE: N comes first clockwise
    assert CompassDirection.nearest(3 * math.pi / 8) is CompassDirection.N
    # between E and SE: E precedes SE
    assert CompassDirection.nearest(-math.pi / 8) is CompassDirection.E


@given(st.floats(-100, 100))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_sector_validation_and_contains():
    with pytest.raises(ValueError):
        Sector(Point2(0, 0), 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Sector(Point2(0, 0), 0.0, 1.0, 7.0)
    s = Sector(Point2(0, 0), 0.0, 10.0, math.radians(45))
    assert s.contains((10, 0)) and s.contains((0, 0))
    assert s.contains((5 * math.cos(0.39), 5 * math.sin(0.39)))
    assert not s.contains((5 * math.cos(0.4), 5 * math.sin(0.4)))
    assert not s.contains((10.01, 0))


@given(st.floats(0, 2 * math.pi), st.integers(0, 2**32 - 1))
def test_draws_stay_in_sector(direction, seed):
    rng = np.random.default_rng(seed)
    s = Sector(Point2(250, 250), direction, 30.0, math.radians(45))
    for _ in range(20):
        p, fallback = sample_sector(rng, s, WORLD)
        assert not fallback and s.contains(p)


def test_radius_and_angle_moments():
    rng = np.random.default_rng(0)
    s = Sector(Point2(250, 250), 1.0, 30.0, math.radians(45))
    pts = np.array([sample_sector(rng, s, WORLD)[0] for _ in range(20000)])
    rho = np.hypot(pts[:, 0] - 250, pts[:, 1] - 250)
    ang = np.arctan2(pts[:, 1] - 250, pts[:, 0] - 250)
    assert abs(rho.mean() - 20.0) < 0.01 * 20.0
    assert abs(ang.mean() - 1.0) < 0.01
    # area-uniform: P(rho <= r/2) = 1/4
    assert abs((rho <= 15).mean() - 0.25) < 0.015


def test_clipped_sector_and_fallback():
    rng = np.random.default_rng(1)
    corner = Sector(Point2(0, 0), math.pi / 4, 30.0, math.radians(45))
    for _ in range(200):
        p, fb = sample_sector(rng, corner, WORLD)
        assert not fb and corner.contains(p)
    outside = Sector(Point2(0, 250), math.pi, 30.0, math.radians(45))
    p, fb = sample_sector(rng, outside, WORLD)
    assert fb
    assert WORLD.min.x <= p.x <= WORLD.max.x and WORLD.min.y <= p.y <= WORLD.max.y
    small = rect(0, 0, 10, 10)
    p, fb = sample_sector(rng, Sector(Point2(5, 5), 0.0, 30.0, math.radians(45)), small, max_rejections=0)
    assert 0 <= p.x <= 10
