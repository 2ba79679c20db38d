from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixprec.fixed import (
    FixedFormat, FixedRangeError, FixedValue, fixed_add, fixed_mul, floor_to_grid, from_bits,
    make_rng, quantize_array, round_nearest, round_stochastic,
)

Q2 = FixedFormat(3, 2)
Q312 = FixedFormat(3, 12)


def grid(fmt):
    return [Fraction(r, 1 << fmt.fraction_bits) for r in range(fmt.raw_min, fmt.raw_max + 1)]


def test_format_bounds():
    assert Q312.width == 16
    assert Q312.epsilon == Fraction(1, 4096)
    assert Q312.min_value == -8
    assert Q312.max_value == 8 - Fraction(1, 4096)
    assert str(Q312) == "fixed(3,12)"
    with pytest.raises(ValueError):
        FixedFormat(40, 40)
    with pytest.raises(FixedRangeError):
        FixedValue(Q2, 1 << 10)


def test_from_bits_weighted_sum():
    # bits listed from weight 2**-n upwards
    assert from_bits([1, 0, 1, 1], FixedFormat(1, 2)) == Fraction(1, 4) + 1 + 2
    assert from_bits([0, 0, 0], FixedFormat(0 + 1, 2)) == 0


@pytest.mark.parametrize("x,expected", [(0.3, 0.25), (0.25, 0.25), (-0.3, -0.5)])
def test_floor_examples(x, expected):
    assert floor_to_grid(x, Q2).value == Fraction(expected)


@pytest.mark.parametrize("x,expected", [(0.3, 0.25), (0.5, 0.5), (0.375, 0.5), (0.125, 0.0), (-0.375, -0.5)])
def test_round_nearest_examples(x, expected):
    assert round_nearest(x, Q2).value == Fraction(expected)


@settings(max_examples=300, deadline=None)
@given(st.fractions(min_value=-8, max_value=Fraction(31, 4), max_denominator=1000))
def test_floor_and_nearest_against_grid_scan(x):
    g = grid(Q2)
    assert floor_to_grid(x, Q2).value == max(v for v in g if v <= x)
    best = min(abs(v - x) for v in g)
    near = [v for v in g if abs(v - x) == best]
    got = round_nearest(x, Q2)
    assert got.value in near
    if len(near) == 2:
        assert got.raw % 2 == 0


def test_out_of_range_raises():
    with pytest.raises(FixedRangeError):
        round_nearest(9, Q312)
    with pytest.raises(FixedRangeError):
        floor_to_grid(-8.5, Q312)
    with pytest.raises(FixedRangeError):
        round_stochastic(100, Q312, make_rng(0))


def test_stochastic_on_grid_is_deterministic():
    rng = make_rng(1)
    assert all(round_stochastic(0.25, Q2, rng).value == Fraction(1, 4) for _ in range(1000))


def test_stochastic_probability_at_point_three():
    rng = make_rng(2)
    draws = quantize_array(np.full(100_000, 0.3), Q2, "stochastic", rng)
    p_low = np.mean(draws == 0.25)
    assert set(np.unique(draws)) == {0.25, 0.5}
    assert abs(p_low - 0.8) <= 0.004


def test_scalar_and_vector_stochastic_agree_on_stream():
    xs = np.linspace(-3, 3, 257)
    a = quantize_array(xs, Q312, "stochastic", make_rng(5))
    rng = make_rng(5)
    b = [float(round_stochastic(x, Q312, rng)) for x in xs]
    assert np.array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(st.floats(-7.9, 7.9), st.integers(0, 2**32))
def test_stochastic_unbiased(x, seed):
    n = 20_000
    r = quantize_array(np.full(n, x), Q312, "stochastic", make_rng(seed))
    eps = float(Q312.epsilon)
    # Bernoulli variance is at most eps^2 / 4; use 5 sigma to keep the property stable
    assert abs(r.mean() - x) <= 5 * eps / (2 * np.sqrt(n))
    assert np.all((r == np.floor(x / eps) * eps) | (r == np.floor(x / eps) * eps + eps))


def test_add_and_mul_examples():
    q = lambda v: round_nearest(v, Q2)
    assert fixed_add(q(0.25), q(0.25)).value == Fraction(1, 2)
    assert fixed_mul(q(0.5), q(0.5)).value == Fraction(1, 4)
    assert fixed_mul(q(0.75), q(0.75)).value == Fraction(1, 2)


def test_stochastic_mul_frequencies():
    rng = make_rng(3)
    a = round_nearest(0.75, Q2)
    hits = [fixed_mul(a, a, "stochastic", rng).value for _ in range(20_000)]
    p_low = hits.count(Fraction(1, 2)) / len(hits)
    assert set(hits) == {Fraction(1, 2), Fraction(3, 4)}
    assert abs(p_low - 0.75) <= 3 * np.sqrt(0.75 * 0.25 / len(hits))


def test_arithmetic_saturates():
    big = round_nearest(7, Q2)
    assert fixed_add(big, big).value == Q2.max_value
    neg = round_nearest(-8, Q2)
    assert fixed_add(neg, neg).value == Q2.min_value
    assert fixed_mul(big, neg).value == Q2.min_value


def test_mul_requires_rng_for_stochastic():
    a = round_nearest(1, Q2)
    with pytest.raises(ValueError):
        fixed_mul(a, a, "stochastic")
    with pytest.raises(ValueError):
        fixed_mul(a, round_nearest(1, Q312))


@settings(max_examples=300, deadline=None)
@given(st.integers(-(1 << 14), (1 << 14) - 1), st.integers(-(1 << 14), (1 << 14) - 1))
def test_mul_nearest_matches_exact_rounding(ra, rb):
    fmt = FixedFormat(3, 11)
    a, b = FixedValue(fmt, ra), FixedValue(fmt, rb)
    exact = a.value * b.value
    got = fixed_mul(a, b)
    if fmt.min_value <= exact <= fmt.max_value:
        assert got == round_nearest(exact, fmt) or got.raw == fmt.raw_max
    else:
        assert got.raw in (fmt.raw_min, fmt.raw_max)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-8, 7.99), min_size=1, max_size=50))
def test_quantize_array_nearest_matches_scalar(xs):
    got = quantize_array(np.array(xs), Q312, "nearest")
    ref = [float(round_nearest(x, Q312)) for x in xs]
    assert np.array_equal(got, ref)


def test_quantize_array_saturates():
    got = quantize_array(np.array([-100.0, 100.0]), Q312)
    assert list(got) == [-8.0, float(Q312.max_value)]
