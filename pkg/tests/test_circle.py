import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from shrinklab.circle import (Arc, BoundaryTie, FixedAngle, PiMultiple, PrecisionExhausted,
                              arc_contains, arc_measure, geodesic_distance)

turns = st.fractions(min_value=0, max_value=Fraction(999, 1000), max_denominator=10 ** 6)


@pytest.mark.parametrize("a,b,expected", [
    (Fraction(0), Fraction(1, 2), math.pi),
    (Fraction(1, 10), Fraction(1, 10), 0.0),
    (Fraction(9, 10), Fraction(1, 10), 0.4 * math.pi),
])
def test_geodesic_distance_examples(a, b, expected):
    assert geodesic_distance(a, b) == pytest.approx(expected, abs=1e-15)


@given(turns, turns)
def test_distance_symmetric_and_bounded(a, b):
    d = geodesic_distance(a, b)
    assert d == pytest.approx(geodesic_distance(b, a), abs=1e-15)
    assert 0 <= d <= math.pi + 1e-15


@given(turns, turns, turns)
def test_distance_triangle_inequality(a, b, c):
    assert geodesic_distance(a, c) <= geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-12


@pytest.mark.parametrize("radius,expected", [
    (math.pi, 1.0),
    (math.pi / 2, 0.5),
    (0.1, 0.1 / math.pi),
    (PiMultiple(Fraction(1, 3)), 1 / 3),
])
def test_arc_measure(radius, expected):
    assert arc_measure(Arc(Fraction(0), radius)) == pytest.approx(expected, rel=1e-15)


def test_arc_measure_value_for_small_radius():
    assert arc_measure(Arc(Fraction(0), 0.1)) == pytest.approx(0.0318310, abs=1e-7)


@pytest.mark.parametrize("bad", [0.0, -1.0, 2 * math.pi, math.inf, PiMultiple(2)])
def test_radius_domain(bad):
    with pytest.raises(ValueError):
        Arc(Fraction(0), bad)


@pytest.mark.parametrize("arc,p,expected", [
    (Arc(Fraction(0), math.pi), Fraction(1, 4), True),
    (Arc(Fraction(0), 0.1), Fraction(1, 2), False),
    (Arc(Fraction(1, 3), 0.5), Fraction(1, 3), True),
])
def test_arc_contains_examples(arc, p, expected):
    assert arc_contains(arc, p) is expected


def test_open_ball_excludes_exact_boundary():
    arc = Arc(Fraction(0), PiMultiple(Fraction(1, 2)))
    assert arc_contains(arc, Fraction(1, 4)) is False
    with pytest.raises(BoundaryTie):
        arc_contains(arc, Fraction(1, 4), ties="raise")


def test_fixed_angle_refuses_undecidable_query():
    # 20 bits of position cannot separate a point from a boundary 2^-30 away
    p = FixedAngle.from_fraction(Fraction(1, 4) + Fraction(1, 1 << 30), 20)
    with pytest.raises(PrecisionExhausted):
        arc_contains(Arc(Fraction(0), PiMultiple(Fraction(1, 2))), p)


@given(turns, st.fractions(min_value=Fraction(1, 1000), max_value=1, max_denominator=1000), turns)
def test_contains_matches_distance(c, coef, p):
    arc = Arc(c, PiMultiple(coef))
    d_turns = abs(p - c) % 1
    d_turns = min(d_turns, 1 - d_turns)
    assert arc_contains(arc, p) == (d_turns < coef / 2)
