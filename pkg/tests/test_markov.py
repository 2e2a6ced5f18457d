import math
from fractions import Fraction

import numpy as np
import pytest

from shrinklab.maps import Blaschke, PowerMap, apply
from shrinklab.circle import geodesic_distance
from shrinklab.markov import (build_partition, deriv, distortion_certificate, extrapolate_level_bound,
                              find_circle_fixed_points, fit_level_constant, forward,
                              iterate_derivative, markov_check, preimages, refine)

B2 = Blaschke((0, 0.5))


def test_blaschke_fixed_point_is_minus_one():
    fps = find_circle_fixed_points(B2)
    assert len(fps) == B2.degree - 1 == 1
    assert float(fps[0]) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("b", [2, 3, 5])
def test_power_map_fixed_points_are_roots_of_unity(b):
    assert find_circle_fixed_points(PowerMap(b)) == [Fraction(k, b - 1) for k in range(b - 1)]


def test_blaschke_preimages_of_minus_one():
    pre = sorted(float(p) for p in preimages(B2, Fraction(1, 2)))
    assert pre == pytest.approx([0.0, 0.5], abs=1e-15)


def test_doubling_preimages_halve():
    t = Fraction(3, 10)
    assert sorted(preimages(PowerMap(2), t)) == [t / 2, (t + 1) / 2]


@pytest.mark.parametrize("target", [Fraction(0), Fraction(1, 7), Fraction(2, 3)])
def test_preimages_round_trip(target):
    m = Blaschke((0, 0.3 + 0.4j, -0.2))
    pre = preimages(m, target)
    assert len(pre) == 3
    for p in pre:
        assert geodesic_distance(apply(m, p), target) < 1e-15


def test_doubling_cylinders_are_dyadic():
    part = build_partition(PowerMap(2))
    assert [(float(a), float(l)) for a, l in part.arcs()] == [(0.0, 0.5), (0.5, 0.5)]
    cyl = refine(part, 5)
    assert len(cyl) == 32
    assert sorted(c.start for c in cyl) == [k / 32 for k in range(32)]
    assert all(c.length == 1 / 32 for c in cyl)


def test_blaschke_level_one_splits_at_zero_and_half():
    part = build_partition(B2)
    starts = [float(a) for a, _ in part.arcs()]
    assert geodesic_distance(starts[0], 0.5) < 1e-14
    assert geodesic_distance(starts[1], 0.0) < 1e-14
    assert [float(l) for _, l in part.arcs()] == pytest.approx([0.5, 0.5], abs=1e-15)


@pytest.mark.parametrize("m", [B2, PowerMap(3), Blaschke((0, 0.3 + 0.4j, -0.2))])
def test_tiling_and_counts(m):
    part = build_partition(m)
    for n in range(1, 5):
        cyl = refine(part, n)
        assert len(cyl) == m.degree ** n
        assert sum(c.length for c in cyl) == pytest.approx(1.0, abs=2.0 ** -40)
        assert all(c.length > 0 for c in cyl)


def test_children_nest_inside_parents():
    part = build_partition(B2)
    x = float(part.fixed_point)
    refine(part, 3)
    parent = np.append(part.endpoints[3], x + 1)
    refine(part, 4)
    child = part.endpoints[4]
    # every level-3 endpoint is also a level-4 endpoint
    assert np.all(np.min(np.abs(child[:, None] - parent[None, :-1]), axis=0) < 1e-13)


def test_markov_property():
    part = build_partition(B2)
    for n in range(2, 7):
        assert markov_check(part, n) < 1e-12


def test_uniform_expansion_of_cylinders():
    rep, cyl = distortion_certificate(B2, 6)
    lam = deriv(B2, np.arange(4096) / 4096).min()
    for c in cyl:
        assert c.K >= lam ** c.level * (1 - 1e-9)
        assert c.K > 1


def test_doubling_certificate_is_exactly_one():
    rep, _ = distortion_certificate(PowerMap(2), 8)
    for s in rep["levels"]:
        assert s["distortion"] == 1.0
        assert s["koebe_max"] == 1.0 and s["koebe_min"] == 1.0
        assert s["conformal_max"] == 1.0 and s["conformal_min"] == 1.0
        assert s["sum_inv_K"] == 1.0
    assert rep["verdict"] == "PASS"


def test_iterate_derivative_chain_rule():
    t = np.array([0.1, 0.37])
    manual = deriv(B2, t) * deriv(B2, forward(B2, t)) * deriv(B2, forward(B2, forward(B2, t)))
    assert np.allclose(iterate_derivative(B2, t, 3)[0], manual, rtol=1e-12)


def test_blaschke_certificate_consistency():
    rep, _ = distortion_certificate(B2, 8)
    assert rep["verdict"] == "PASS"
    level1 = rep["levels"][0]
    # sum over level-1 arcs of 1/K is at most total length times the fitted constant
    assert level1["sum_inv_K"] <= level1["total_length"] * rep["fit"]["C_fit"]


def test_extrapolation_on_geometric_tail():
    # log v_k = 1 - 0.5^k converges to 1
    levels = list(range(1, 9))
    vals = [math.exp(1 - 0.5 ** k) for k in levels]
    out = extrapolate_level_bound(vals, levels, 4, 0.5)
    assert out["C"] == pytest.approx(math.e, rel=1e-12)


def test_fit_flags_growth_beyond_training():
    levels = list(range(1, 9))
    fit = fit_level_constant({"s": [1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0]}, levels, 4, 0.5)
    assert not fit["pass"] and fit["violations"]
