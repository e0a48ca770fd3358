import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from feaslab.bounds import (BoundInputError, binomial_tail, binomial_upper_tail,
                            chernoff_estimate, log_binom_pmf, multistage_product)

mpmath.mp.dps = 60


def oracle_tail(m, N, alpha):
    """Extended-precision sum over k < m."""
    a = mpmath.mpf(alpha)
    return sum(mpmath.binomial(N, k) * a**k * (1 - a) ** (N - k) for k in range(m))


def oracle_upper(m, N, alpha):
    a = mpmath.mpf(alpha)
    return sum(mpmath.binomial(N, k) * a**k * (1 - a) ** (N - k) for k in range(m, N + 1))


def exact_tail(m, N, alpha: Fraction):
    return sum(Fraction(math.comb(N, k)) * alpha**k * (1 - alpha) ** (N - k) for k in range(m))


# ---------------------------------------------------------------- frozen values


def test_single_term():
    assert binomial_tail(1, 10, 0.1) == pytest.approx(0.9**10, rel=1e-14)
    assert binomial_tail(1, 10, 0.1) == pytest.approx(0.3486784, abs=1e-7)


def test_complement_of_last_term():
    assert binomial_tail(2, 2, 0.5) == pytest.approx(0.75, rel=1e-15)


def test_three_twenty_point_two():
    ref = float(exact_tail(3, 20, Fraction(1, 5)))
    assert binomial_tail(3, 20, 0.2) == pytest.approx(ref, rel=1e-13)
    assert round(binomial_tail(3, 20, 0.2), 5) == 0.20608


def test_three_thirty_point_one():
    ref = float(exact_tail(3, 30, Fraction(1, 10)))
    assert binomial_tail(3, 30, 0.1) == pytest.approx(ref, rel=1e-13)
    assert round(binomial_tail(3, 30, 0.1), 5) == 0.41135


def test_alpha_edges():
    assert binomial_tail(3, 10, 0.0) == 1.0
    assert binomial_tail(3, 10, 1.0) == 0.0
    assert binomial_tail(10, 10, 1.0) == 0.0


@pytest.mark.parametrize("args", [(0, 10, 0.1), (11, 10, 0.1), (2, 10, -0.1), (2, 10, 1.1),
                                  (1.5, 10, 0.1)])
def test_invalid_input_raises(args):
    with pytest.raises(BoundInputError):
        binomial_tail(*args)


def test_chernoff_zero_exponent():
    assert chernoff_estimate(3, 20, 0.1) == pytest.approx(1.0, abs=1e-12)


def test_chernoff_formula_value():
    assert chernoff_estimate(1, 100, 0.1) == pytest.approx(math.exp(-5), rel=1e-14)
    assert chernoff_estimate(1, 100, 0.1) == pytest.approx(0.0067379, abs=1e-7)


def test_chernoff_precondition():
    with pytest.raises(BoundInputError):
        chernoff_estimate(4, 10, 0.1)
    with pytest.raises(BoundInputError):
        chernoff_estimate(1, 10, 0.0)


def test_product_single_stage():
    assert multistage_product([(2, 15, 0.2)]) == pytest.approx(1 - binomial_tail(2, 15, 0.2),
                                                               rel=1e-13)


def test_product_zero_alpha_stage():
    assert multistage_product([(1, 10, 0.1), (2, 10, 0.0)]) == 0.0


def test_product_two_stages():
    ref = (1 - Fraction(9, 10) ** 10) ** 2
    v = multistage_product([(1, 10, 0.1), (1, 10, 0.1)])
    assert v == pytest.approx(float(ref), rel=1e-13)
    assert round(v, 5) == 0.42422


# ---------------------------------------------------------------- oracle agreement


@pytest.mark.parametrize("N", [1, 2, 5, 17, 100, 1000, 10_000])
@pytest.mark.parametrize("alpha", [1e-6, 0.001, 0.01, 0.1, 0.37, 0.5, 0.9, 0.999])
def test_matches_extended_precision_oracle(N, alpha):
    for m in sorted({1, min(2, N), max(1, N // 3), max(1, N // 2), N}):
        ref = oracle_tail(m, N, alpha)
        got = binomial_tail(m, N, alpha)
        if ref < 1e-300:
            assert got <= 1e-290
            continue
        assert abs(mpmath.mpf(got) - ref) <= 1e-12 * ref, (m, N, alpha)


@pytest.mark.parametrize("N", [3, 50, 2000])
@pytest.mark.parametrize("alpha", [0.01, 0.3, 0.8])
def test_upper_tail_matches_oracle(N, alpha):
    for m in sorted({1, N // 2 or 1, N}):
        ref = oracle_upper(m, N, alpha)
        got = binomial_upper_tail(m, N, alpha)
        if ref < 1e-300:
            continue
        assert abs(mpmath.mpf(got) - ref) <= 1e-12 * ref


def test_large_N_does_not_overflow():
    v = binomial_tail(500, 100_000, 0.005)
    assert 0.0 < v < 1.0
    assert abs(v - float(oracle_tail(500, 100_000, 0.005))) <= 1e-9


def test_log_pmf_matches_exact():
    for N, k, a in [(10, 3, 0.2), (1000, 17, 0.01), (5000, 2500, 0.5), (7, 0, 0.3), (7, 7, 0.3)]:
        ref = mpmath.log(mpmath.binomial(N, k) * mpmath.mpf(a) ** k * (1 - mpmath.mpf(a)) ** (N - k))
        assert log_binom_pmf(k, N, a) == pytest.approx(float(ref), rel=1e-13, abs=1e-13)


# ---------------------------------------------------------------- properties

grid = st.tuples(st.integers(1, 400), st.floats(0.0, 1.0)).flatmap(
    lambda t: st.tuples(st.integers(1, t[0]), st.just(t[0]), st.just(t[1])))


@settings(max_examples=300, deadline=None)
@given(grid)
def test_tail_plus_upper_tail_is_one(mNa):
    m, N, a = mNa
    assert abs(binomial_tail(m, N, a) + binomial_upper_tail(m, N, a) - 1.0) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(grid, st.floats(0.0, 1.0))
def test_nonincreasing_in_alpha(mNa, b):
    m, N, a = mNa
    lo, hi = sorted((a, b))
    assert binomial_tail(m, N, hi) <= binomial_tail(m, N, lo) * (1 + 1e-12) + 1e-300


@settings(max_examples=300, deadline=None)
@given(grid)
def test_nondecreasing_in_m(mNa):
    m, N, a = mNa
    if m < N:
        assert binomial_tail(m + 1, N, a) >= binomial_tail(m, N, a) * (1 - 1e-12)


@settings(max_examples=300, deadline=None)
@given(grid)
def test_nonincreasing_in_N(mNa):
    m, N, a = mNa
    assert binomial_tail(m, N + 1, a) <= binomial_tail(m, N, a) * (1 + 1e-12) + 1e-300


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 20), st.integers(1, 2000), st.floats(1e-4, 1.0))
def test_chernoff_dominates_tail(m, N, a):
    if m > N or N * a < m - 1:
        return
    assert chernoff_estimate(m, N, a) >= binomial_tail(m, N, a) * (1 - 1e-12)
