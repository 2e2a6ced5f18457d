import math
from fractions import Fraction

import numpy as np
import pytest

from shrinklab.maps import Blaschke, MapSequence
from shrinklab.mixing import (DegenerateFit, TurnInterval, analyse, default_family, dyadic_arcs,
                              dyadic_exact_mixing, empirical_mixing_coefficient,
                              fit_and_validate, fit_exponential_decay, golden_arcs,
                              grid_half_width, mixing_scan)

DOUBLING = MapSequence.power([2])
HALF = TurnInterval(Fraction(0), Fraction(1, 2))


def _brute_force_preimages(A, E, n):
    # enumerate the 2^n preimage intervals of E explicitly
    B = 1 << n
    total = Fraction(0)
    for k in range(B):
        for s, L in ((E.start, E.length),):
            lo, hi = (s + k) / B, (s + L + k) / B
            for shift in (-1, 0, 1):
                a, b = max(lo + shift, A.start), min(hi + shift, A.start + A.length)
                if b > a:
                    total += b - a
    return abs(total / E.length - A.length)


def test_half_arcs_independent_after_one_step():
    assert dyadic_exact_mixing(DOUBLING, HALF, HALF, 1) == 0
    assert _brute_force_preimages(HALF, HALF, 1) == 0


@pytest.mark.parametrize("n", [2, 3, 6])
def test_adjacent_quarters(n):
    A = TurnInterval(Fraction(0), Fraction(1, 4))
    E = TurnInterval(Fraction(1, 4), Fraction(1, 4))
    assert dyadic_exact_mixing(DOUBLING, A, E, n) == 0


def test_full_circle_target():
    full = TurnInterval(Fraction(0), Fraction(1))
    for n in range(0, 6):
        for A in dyadic_arcs(3):
            assert dyadic_exact_mixing(DOUBLING, A, full, n) == 0


@pytest.mark.parametrize("n", [0, 1, 2, 3, 5])
def test_closed_form_matches_preimage_enumeration(n):
    fam = dyadic_arcs(3) + [TurnInterval(Fraction(3, 8), Fraction(1, 2)),
                            TurnInterval(Fraction(7, 8), Fraction(1, 4))]
    for A in fam:
        for E in fam:
            assert dyadic_exact_mixing(DOUBLING, A, E, n) == _brute_force_preimages(A, E, n)


def test_deviation_zero_from_arc_level_on():
    arcs = dyadic_arcs(2)
    assert len(arcs) ** 2 == 16
    for n in range(2, 12):
        assert all(dyadic_exact_mixing(DOUBLING, A, E, n) == 0 for A in arcs for E in arcs)
    # before the arc level the correlation is visible
    assert max(dyadic_exact_mixing(DOUBLING, A, E, 1) for A in arcs for E in arcs) > 0


def test_oracle_rejects_non_dyadic_input():
    with pytest.raises(ValueError):
        dyadic_exact_mixing(DOUBLING, TurnInterval(Fraction(1, 3), Fraction(1, 3)), HALF, 2)
    with pytest.raises(ValueError):
        dyadic_exact_mixing(MapSequence.power([3]), HALF, HALF, 2)


def test_unmixed_convention():
    out = empirical_mixing_coefficient(DOUBLING, 0, [HALF], [HALF], 10 ** 4)
    assert out["sup"] == pytest.approx(0.5, abs=1e-12)


def test_empirical_dyadic_zero():
    out = empirical_mixing_coefficient(DOUBLING, 4, [HALF], [HALF], 10 ** 5)
    assert out["sup"] <= grid_half_width(DOUBLING, 4, HALF, 10 ** 5)


def test_grid_agrees_with_oracle():
    fam = dyadic_arcs(3)
    rep = mixing_scan(DOUBLING, range(0, 6), fam, 10 ** 5)
    for p in rep.pairs:
        exact = float(dyadic_exact_mixing(DOUBLING, fam[p.a], fam[p.e], p.n))
        assert abs(p.deviation - exact) <= grid_half_width(DOUBLING, p.n, fam[p.e], 10 ** 5)


def test_rotation_equivariance_for_period_rotations():
    # rotating by theta with 2^n theta = theta mod 1 commutes with T_n
    n, theta = 3, Fraction(1, 7)
    fam = [TurnInterval(Fraction(1, 10), Fraction(1, 3)), TurnInterval(Fraction(2, 5), Fraction(1, 4))]
    rot = [TurnInterval(f.start + theta, f.length) for f in fam]
    a = mixing_scan(DOUBLING, [n], fam, 10 ** 5).pairs
    b = mixing_scan(DOUBLING, [n], rot, 10 ** 5).pairs
    for p, q in zip(a, b):
        tol = 3 * math.hypot(p.se, q.se) + 2 * grid_half_width(DOUBLING, n, fam[p.e], 10 ** 5)
        assert abs(p.deviation - q.deviation) <= tol


def test_default_family_shape():
    fam = default_family()
    assert len(fam) == 8
    assert fam[:4] == dyadic_arcs(2)
    assert [f.length for f in golden_arcs()] == [Fraction(1, 2), Fraction(1, 3), Fraction(1, 5), Fraction(1, 7)]


def test_fit_recovers_synthetic_rate():
    rows = [(n, math.exp(-n / 10)) for n in range(1, 30)]
    fit = fit_exponential_decay(rows, noise=0.0)
    assert fit["tau_emp"] == pytest.approx(0.1, rel=1e-12)
    assert fit["K_emp"] == pytest.approx(1.0, rel=1e-12)
    assert not fit["non_exponential"]


def test_fit_degenerate_when_all_zero():
    with pytest.raises(DegenerateFit, match="faster than measurable"):
        fit_exponential_decay([(n, 0.0, 0.01) for n in range(1, 20)])


def test_fit_flags_non_exponential_shape():
    rows = [(n, 1.0 / n if n % 2 else 0.5) for n in range(1, 30)]
    assert fit_exponential_decay(rows, noise=0.0)["non_exponential"]


def test_fit_and_validate():
    rows = [(n, 0.4 * math.exp(-0.3 * n)) for n in range(1, 41)]
    out = fit_and_validate(rows, 1 / 168, 20)
    assert out["pass"] and out["K_fit"] == pytest.approx(0.4 * math.exp(-0.3 + 1 / 168))
    rows[30] = (31, 10.0)
    assert not fit_and_validate(rows, 1 / 168, 20)["pass"]


def test_blaschke_short_scan_decays():
    seq = MapSequence.constant(Blaschke((0, 0.5)))
    rep = analyse(mixing_scan(seq, range(0, 9), default_family(), 10 ** 4), split=4)
    sups = [d for n, d, _ in rep.rows]
    assert sups[0] > 0.4 and max(sups[5:]) < sups[1]
    assert all(0 <= d <= 1 for d in sups)
