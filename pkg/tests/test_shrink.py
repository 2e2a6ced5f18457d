import math
from fractions import Fraction

import numpy as np
import pytest

from shrinklab.maps import Blaschke, MapSequence
from shrinklab.schedules import CenterGenerator, GoldenAngle, RadiusGenerator
from shrinklab.shrink import (OUTSIDE_HYPOTHESES, TargetSchedule, count_hits, monte_carlo_shrinking,
                              phi)
from shrinklab.stats import deviation_statistic, loglog_slope

DOUBLING = MapSequence.power([2])
HARMONIC = TargetSchedule(CenterGenerator(fixed=GoldenAngle()), RadiusGenerator("power-law"))
FULL = TargetSchedule(CenterGenerator(fixed=GoldenAngle()), RadiusGenerator("constant", scale=1))


def test_phi_harmonic():
    assert phi(HARMONIC, 3) == pytest.approx(11 / 6, rel=1e-15)


def test_phi_empty_and_full():
    assert phi(HARMONIC, 0) == 0
    assert phi(FULL, 7) == 7


def test_count_hits_period_two_orbit():
    sched = TargetSchedule(CenterGenerator(fixed=Fraction(1, 3)), RadiusGenerator("constant", value=0.5))
    st = count_hits(DOUBLING, Fraction(1, 3), sched, [10])
    assert st.counts == [5]


def test_count_hits_full_target_and_empty_horizon():
    assert count_hits(DOUBLING, Fraction(1, 5), FULL, [12]).counts == [12]
    assert count_hits(DOUBLING, Fraction(1, 5), FULL, [0]).counts == [0]


@pytest.mark.parametrize("count,phiN,expected", [
    (100, 100.0, 0.0),
    (110, 100.0, 10 / (10 * math.log(100) ** 1.6)),
    (0, 0.0, 0.0),
])
def test_deviation_statistic(count, phiN, expected):
    assert deviation_statistic(count, phiN, 0.1) == pytest.approx(expected, abs=1e-12)


def test_deviation_statistic_value():
    assert deviation_statistic(110, 100.0, 0.1) == pytest.approx(0.0868, abs=1e-4)


def test_full_target_ensemble_has_zero_deviation():
    ens = monte_carlo_shrinking(DOUBLING, FULL, 4, [8, 12], seed=1)
    assert not ens.failures
    for s in ens.stats:
        assert s.counts == [8, 12]
        assert s.deviations == [0.0, 0.0]


def test_single_rational_sample_matches_count_hits():
    x = Fraction(2, 7)
    ens = monte_carlo_shrinking(DOUBLING, HARMONIC, 1, [256, 1024], seed=3, points=[x])
    direct = count_hits(DOUBLING, x, HARMONIC, [256, 1024])
    assert ens.stats[0].counts == direct.counts


def test_digit_stream_counts_match_exact_rational_check():
    # the windowed fast path and the exact per-step membership test agree
    from shrinklab.cantor import BaseSequence, DigitStream
    from shrinklab.circle import arc_contains
    ens = monte_carlo_shrinking(DOUBLING, HARMONIC, 3, [2000], seed=11)
    for s in ens.stats:
        stream = DigitStream.random(BaseSequence.constant(2), 11, s.sample_id)
        exact = sum(arc_contains(HARMONIC.target(n), stream.angle(n)) for n in range(1, 2001))
        assert s.counts == [exact]


def test_same_seed_same_counts():
    a = monte_carlo_shrinking(DOUBLING, HARMONIC, 5, [1 << 12], seed=9)
    b = monte_carlo_shrinking(DOUBLING, HARMONIC, 5, [1 << 12], seed=9)
    assert [s.counts for s in a.stats] == [s.counts for s in b.stats]


def test_short_budget_becomes_recorded_failure_not_counts():
    ens = monte_carlo_shrinking(DOUBLING, HARMONIC, 2, [1 << 10, 1 << 12], seed=7, precision=1 << 11)
    assert ens.stats == []
    assert len(ens.failures) == 2
    assert all("precision" in f.message for f in ens.failures)


def test_non_monotone_schedule_is_flagged():
    sched = TargetSchedule(CenterGenerator(fixed=Fraction(0)),
                           RadiusGenerator("explicit", values=(0.1, 0.3, 0.2)))
    md = sched.metadata()
    assert md["monotone"] is False and md["note"] == OUTSIDE_HYPOTHESES
    assert HARMONIC.metadata() == {"monotone": True}


def test_blaschke_ensemble_runs_without_failures():
    seq = MapSequence.constant(Blaschke((0, 0.5)))
    ens = monte_carlo_shrinking(seq, HARMONIC, 4, [50, 100], seed=2)
    assert not ens.failures and len(ens.stats) == 4


def test_loglog_slope_recovers_power():
    x = np.array([10.0, 100.0, 1000.0])
    assert loglog_slope(x, 3 * x ** 0.5) == pytest.approx(0.5)
