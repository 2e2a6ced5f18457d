import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinklab.cantor import (BaseSequence, DigitStream, PatternSchedule, ball_events,
                              count_patterns, expand, expected_pattern_count, match_mask, match_run,
                              phi_cantor, phi_cantor_exact, value_of, xi_function)
from shrinklab.circle import PrecisionExhausted

TWO = BaseSequence.constant(2)
RAMP = BaseSequence.from_rule(lambda i: i + 1, "2,3,4,...")
TWO_THREE = BaseSequence.periodic([2, 3])
ALTERNATING = DigitStream.explicit((), TWO, repeat=(1, 0))


def test_expand_examples():
    assert expand(Fraction(1, 2), RAMP, 4) == [1, 0, 0, 0]
    assert expand(Fraction(5, 6), RAMP, 3) == [1, 2, 0]
    assert expand(Fraction(0), RAMP, 5) == [0] * 5


def test_value_of_examples():
    assert value_of([1, 0], TWO_THREE) == Fraction(1, 2)
    assert value_of([1, 2], TWO_THREE) == Fraction(5, 6)
    assert value_of([], TWO_THREE) == 0


@settings(max_examples=60)
@given(st.fractions(min_value=0, max_value=Fraction(499, 500), max_denominator=500),
       st.lists(st.integers(2, 7), min_size=1, max_size=4))
def test_expand_value_round_trip(x, bases):
    bs = BaseSequence.periodic(bases)
    k = 24
    d = expand(x, bs, k)
    assert all(0 <= di < bs.base(i + 1) for i, di in enumerate(d))
    v = value_of(d, bs)
    assert 0 <= x - v < Fraction(1, bs.product(k))


def test_expand_rejects_out_of_range():
    with pytest.raises(ValueError):
        expand(Fraction(3, 2), TWO, 3)


def test_match_run_examples():
    one = PatternSchedule.zeros(xi_function("constant", 1), TWO)
    two = PatternSchedule.zeros(xi_function("constant", 2), TWO)
    assert match_run(ALTERNATING, 1, one) is True
    assert match_run(ALTERNATING, 1, two) is False


def test_alternating_stream_hits_at_odd_n():
    one = PatternSchedule.zeros(xi_function("constant", 1), TWO)
    mask = match_mask(ALTERNATING, one, 10)
    assert np.flatnonzero(mask).tolist() == [0, 2, 4, 6, 8]
    assert count_patterns(ALTERNATING, one, [10]).counts == [5]


def test_all_zero_stream_matches_everywhere():
    zero = DigitStream.canonical(Fraction(0), TWO)
    pat = PatternSchedule.zeros(xi_function("floor-log2"), TWO)
    assert count_patterns(zero, pat, [100, 1000]).counts == [100, 1000]


@pytest.mark.parametrize("k", [1, 3, 5])
def test_random_match_frequency(k):
    pat = PatternSchedule.zeros(xi_function("constant", k), TWO)
    x = DigitStream.random(TWO, seed=5, sample_id=k)
    # disjoint windows make the trials independent
    mask = match_mask(x, pat, 100_000 * (k + 1))[:: k + 1]
    p = 2.0 ** -k
    se = math.sqrt(p * (1 - p) / mask.size)
    assert abs(mask.mean() - p) < 4 * se


def test_phi_cantor_examples():
    assert phi_cantor_exact(TWO, xi_function("identity"), 3) == Fraction(7, 16)
    assert phi_cantor(TWO, xi_function("identity"), 0) == 0


@pytest.mark.parametrize("k", [1, 4, 10])
def test_phi_cantor_block_sums(k):
    assert phi_cantor_exact(TWO, xi_function("floor-log2-plus-1"), 2 ** k - 1) == Fraction(k, 4)


def test_expected_zero_pattern_count_is_twice_phi_in_base_two():
    # a run of xi(n) prescribed digits has probability 2^-xi(n), while the
    # normalisation sums 2^-(xi(n)+1): the ratio is exactly 2
    pat = PatternSchedule.zeros(xi_function("floor-log2"), TWO)
    N = 4096
    assert expected_pattern_count(TWO, pat, N) == pytest.approx(2 * phi_cantor(TWO, pat.xi, N), rel=1e-14)


def test_expected_count_for_shifted_pattern_in_mixed_bases():
    # pattern digits of 5/6 in bases (2,3,...) are 1,2,0,0,...; a digit 2
    # can only occur where the base is 3, which halves the chance
    pat = PatternSchedule.from_point(Fraction(5, 6), TWO_THREE, xi_function("floor-log2"))
    assert pat.digits(4).tolist() == [1, 2, 0, 0]
    N = 64
    brute = 0.0
    for n in range(1, N + 1):
        k = int(pat.lengths([n])[0])
        prob = 1.0
        for i in range(1, k + 1):
            b = TWO_THREE.base(n + i)
            prob *= (1 / b) if pat.digits(k)[i - 1] < b else 0.0
        brute += prob
    assert expected_pattern_count(TWO_THREE, pat, N) == pytest.approx(brute, rel=1e-14)


def test_random_stream_reproducible_and_limited():
    a = DigitStream.random(TWO, seed=1, sample_id=2).block(1, 100)
    b = DigitStream.random(TWO, seed=1, sample_id=2).block(1, 100)
    assert np.array_equal(a, b)
    short = DigitStream.random(TWO, seed=1, limit=10)
    with pytest.raises(PrecisionExhausted):
        short.block(1, 11)


def test_match_lies_between_inner_and_outer_balls():
    pat = PatternSchedule.zeros(xi_function("floor-log2"), TWO)
    x = DigitStream.random(TWO, seed=3)
    for n in range(1, 300):
        ev = ball_events(x, n, pat)
        assert not ev["inner"] or ev["match"]
        assert not ev["match"] or ev["outer"]


def test_xi_must_be_nondecreasing():
    pat = PatternSchedule(lambda n: np.where(np.asarray(n) % 2 == 0, 1, 2), DigitStream.canonical(0, TWO))
    with pytest.raises(ValueError):
        pat.validated_lengths(10)
