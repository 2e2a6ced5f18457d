import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinklab.circle import PrecisionExhausted, to_float
from shrinklab.maps import (Blaschke, MapSequence, PowerMap, apply, boundary_derivative,
                            lifted_argument, orbit, precision_budget)

B2 = Blaschke((0, 0.5))


def test_power_map_apply_exact():
    assert apply(PowerMap(2), Fraction(1, 3)) == Fraction(2, 3)


def test_blaschke_sends_one_to_minus_one():
    assert to_float(apply(B2, Fraction(0))) == pytest.approx(0.5, abs=1e-15)


def test_blaschke_at_i_matches_direct_complex_arithmetic():
    # b(i) = i (1/2 - i)/(1 - i/2) = (3 + 4i)/5
    w = (3 + 4j) / 5
    expected = (cmath.phase(w) / (2 * math.pi)) % 1
    assert expected == pytest.approx(0.147584, abs=1e-6)
    assert to_float(apply(B2, Fraction(1, 4))) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("m,p,expected", [
    (PowerMap(3), Fraction(1, 7), 3.0),
    (B2, Fraction(0), 4.0),
    (B2, Fraction(1, 2), 4 / 3),
])
def test_boundary_derivative(m, p, expected):
    assert boundary_derivative(m, p) == pytest.approx(expected, rel=1e-14)


def test_derivative_agrees_with_lift_finite_differences():
    th = np.linspace(0.1, 6.0, 25)
    h = 1e-6
    fd = (lifted_argument(B2, th + h) - lifted_argument(B2, th - h)) / (2 * h)
    exact = [boundary_derivative(B2, Fraction(t / (2 * math.pi))) for t in th]
    assert np.allclose(fd, exact, rtol=1e-6)


def test_blaschke_minimum_derivative_is_four_thirds():
    t = np.arange(1024) / 1024
    d = [boundary_derivative(B2, Fraction(float(x))) for x in t]
    assert min(d) == pytest.approx(4 / 3, rel=1e-12)
    assert min(d) > 1


@pytest.mark.parametrize("m,degree", [(PowerMap(2), 2), (PowerMap(5), 5), (B2, 2)])
def test_lift_winds_degree_times(m, degree):
    total = lifted_argument(m, 2 * math.pi) - lifted_argument(m, 0.0)
    assert total == pytest.approx(2 * math.pi * degree, abs=1e-9)


def test_lift_strictly_increasing_on_grid():
    th = np.linspace(0, 2 * math.pi, 1 << 10)
    assert np.all(np.diff(lifted_argument(B2, th)) > 0)


def test_doubling_orbit_of_one_third_has_period_two():
    pts = list(orbit(MapSequence.constant(PowerMap(2)), Fraction(1, 3), 6))
    assert pts == [Fraction(2, 3), Fraction(1, 3)] * 3


def test_mixed_bases_orbit():
    pts = list(orbit(MapSequence.power([2, 3]), Fraction(5, 6), 2))
    assert pts == [Fraction(2, 3), Fraction(0)]


@pytest.mark.parametrize("seq", [MapSequence.power([2]), MapSequence.power([3, 5]),
                                 MapSequence.constant(B2)])
def test_fixed_point_orbit_is_constant(seq):
    x = Fraction(0) if seq.power_bases() is not None else Fraction(1, 2)
    for p in orbit(seq, x, 20):
        assert to_float(p) == pytest.approx(float(x), abs=1e-12)


def test_blaschke_orbit_tracks_precision_and_stays_on_circle():
    pts = list(orbit(MapSequence.constant(B2), Fraction(1, 7), 50))
    assert all(p.precision_bits() >= 32 for p in pts)
    # float orbit agreement for the first few steps (chaos amplifies float error later)
    z = cmath.exp(2j * math.pi / 7)
    for p in pts[:10]:
        z = z * (0.5 - z) / (1 - 0.5 * z)
        assert abs(z) == pytest.approx(1, abs=1e-12)
        assert to_float(p) == pytest.approx((cmath.phase(z) / (2 * math.pi)) % 1, abs=1e-9)


def test_orbit_refuses_when_budget_exhausted():
    seq = MapSequence.constant(B2)
    with pytest.raises(PrecisionExhausted):
        list(orbit(seq, Fraction(1, 7), 200, precision=80))


def test_precision_budget_formula():
    # sum of log2 of degrees plus 64 guard bits
    assert precision_budget(MapSequence.power([2]), 1 << 20) == (1 << 20) + 64


def test_tau_from_alpha():
    assert MapSequence.constant(B2).tau == pytest.approx(1 / 168)


def test_converging_family_zeros():
    seq = MapSequence.converging(200)
    assert seq.map_at(1).zeros[1].real == pytest.approx(1 - 1 / 4)
    assert seq.map_at(10).zeros[1].real == pytest.approx(1 - 1 / 121)


@settings(max_examples=40, deadline=None)
@given(st.fractions(min_value=0, max_value=Fraction(99, 100), max_denominator=997))
def test_power_map_orbit_matches_rational_arithmetic(x):
    seq = MapSequence.power([2, 3, 7])
    y = x
    for n, p in enumerate(orbit(seq, x, 12), start=1):
        y = (y * [2, 3, 7][(n - 1) % 3]) % 1
        assert p == y
