import numpy as np
import pytest
from hypothesis import given, strategies as st

from cotransport.geometry import (Circle, Rect, max_penetration, segment_hits,
                                  segment_hits_circle, segment_hits_rect)


def test_rect_penetration_interior():
    r = Rect((0.0, 0.0), (1.0, 0.5))
    assert r.penetration(np.array([0.0, 0.0])) == pytest.approx(0.5)
    assert r.penetration(np.array([0.9, 0.0])) == pytest.approx(0.1)
    assert r.penetration(np.array([0.0, 0.4])) == pytest.approx(0.1)


def test_rect_boundary_is_zero():
    r = Rect((0.0, 0.0), (1.0, 0.5))
    # contact without overlap reports zero depth
    assert r.penetration(np.array([1.0, 0.0])) == 0.0
    assert r.penetration(np.array([0.0, 0.5])) == 0.0
    assert r.penetration(np.array([2.0, 0.0])) == 0.0


def test_circle_penetration():
    c = Circle((1.0, 1.0), 0.5)
    assert c.penetration(np.array([1.0, 1.0])) == pytest.approx(0.5)
    assert c.penetration(np.array([1.3, 1.0])) == pytest.approx(0.2)
    assert c.penetration(np.array([1.5, 1.0])) == 0.0
    assert c.penetration(np.array([3.0, 1.0])) == 0.0


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_penetration_nonnegative(x, y):
    obs = [Rect((0.0, 0.0), (1.0, 1.0)), Circle((2.0, 0.0), 0.7)]
    assert max_penetration(np.array([x, y]), obs) >= 0.0


def test_max_penetration_picks_deepest():
    obs = [Rect((0.0, 0.0), (1.0, 1.0)), Circle((0.0, 0.0), 0.3)]
    # center is 1.0 deep in the rect but only 0.3 deep in the circle
    assert max_penetration(np.array([0.0, 0.0]), obs) == pytest.approx(1.0)


def test_segment_circle():
    c = Circle((0.0, 0.0), 0.5)
    assert segment_hits_circle(np.array([-2.0, 0.0]), np.array([2.0, 0.0]), c)
    assert not segment_hits_circle(np.array([-2.0, 1.0]), np.array([2.0, 1.0]), c)
    # endpoint inside counts
    assert segment_hits_circle(np.array([0.1, 0.0]), np.array([2.0, 0.0]), c)


def test_segment_rect():
    r = Rect((0.0, 0.0), (0.5, 0.5))
    assert segment_hits_rect(np.array([-2.0, 0.0]), np.array([2.0, 0.0]), r)
    assert not segment_hits_rect(np.array([-2.0, 0.9]), np.array([2.0, 0.9]), r)
    # diagonal crossing a corner region
    assert segment_hits_rect(np.array([-1.0, -1.0]), np.array([1.0, 1.0]), r)
    assert segment_hits(np.array([-2.0, 0.0]), np.array([2.0, 0.0]), [r])
    assert not segment_hits(np.array([-2.0, 2.0]), np.array([2.0, 2.0]), [r])
