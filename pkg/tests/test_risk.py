import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad
from scipy.stats import norm

from lsmcoc.risk import (
    CocParams,
    NonFiniteSampleError,
    SpectralDensity,
    coc_pair,
    empirical_quantile,
    empirical_spectral,
    quantile_rank,
    shortfall_term,
)

ONE_TO_TEN = np.arange(1.0, 11.0)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
samples = arrays(np.float64, st.integers(1, 60), elements=finite)
levels = st.floats(0.01, 0.999)
rates = st.floats(0.0, 1.0)
shifts = st.integers(-1000, 1000).map(float)  # exact in binary arithmetic


def _ref_quantile(ys, alpha):
    # smallest sample value whose empirical cdf reaches alpha
    for y in sorted(ys):
        if np.count_nonzero(ys <= y) / len(ys) >= alpha:
            return y
    raise AssertionError


def test_quantile_fixtures():
    assert empirical_quantile(ONE_TO_TEN, 0.5) == 5.0
    assert empirical_quantile(ONE_TO_TEN, 0.95) == 10.0
    assert empirical_quantile(ONE_TO_TEN[::-1], 0.5) == 5.0
    assert empirical_quantile(ONE_TO_TEN, 0.1) == 1.0
    assert empirical_quantile(ONE_TO_TEN, 0.11) == 2.0


def test_quantile_rank_float_edges():
    # 0.7 * 10 rounds up to 7.000000000000001 in floating point
    assert quantile_rank(10, 0.7) == 7
    assert quantile_rank(100_000, 0.995) == 99_500
    assert quantile_rank(1, 0.995) == 1
    with pytest.raises(ValueError):
        quantile_rank(0, 0.5)


@settings(max_examples=300)
@given(samples, levels)
def test_quantile_matches_cdf_definition(ys, alpha):
    assert empirical_quantile(ys, alpha) == _ref_quantile(ys, alpha)


def test_normal_quantile():
    ys = np.random.default_rng(0).standard_normal(100_000)
    assert abs(empirical_quantile(ys, 0.995) - norm.ppf(0.995)) < 0.05


def test_shortfall_fixtures():
    assert shortfall_term(ONE_TO_TEN, 5.0) == 1.0
    assert shortfall_term(ONE_TO_TEN, 1.0) == 0.0
    assert shortfall_term(ONE_TO_TEN, -3.0) == 0.0


def test_normal_partial_expectation():
    q = norm.ppf(0.995)
    exact = q * norm.cdf(q) + norm.pdf(q)
    by_quad, _ = quad(lambda z: (q - z) * norm.pdf(z), -np.inf, q)
    assert exact == pytest.approx(by_quad, rel=1e-10)
    n = 100_000
    ys = np.random.default_rng(1).standard_normal(n)
    se = np.maximum(q - ys, 0).std(ddof=1) / math.sqrt(n)
    assert abs(shortfall_term(ys, q) - exact) < 3 * se


def test_coc_pair_fixtures():
    assert tuple(coc_pair(ONE_TO_TEN, CocParams(0.5, 0.0))) == (5.0, 1.0, 4.0)
    for alpha, eta in ((0.5, 0.0), (0.995, 0.06), (0.01, 3.0)):
        assert tuple(coc_pair(np.full(17, 2.5), CocParams(alpha, eta))) == (2.5, 0.0, 2.5)


def test_nonfinite_sample_aborts():
    with pytest.raises(NonFiniteSampleError):
        coc_pair([1.0, np.nan, 2.0], CocParams())
    with pytest.raises(NonFiniteSampleError):
        empirical_quantile([1.0, np.inf], 0.5)
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)


def test_coc_params_validated():
    with pytest.raises(ValueError):
        CocParams(1.0, 0.06)
    with pytest.raises(ValueError):
        CocParams(0.99, -0.1)


# --------------------------------------------------------------------------
# property suites, at least 1000 randomized cases each


@settings(max_examples=1000)
@given(samples, levels, rates, shifts)
def test_translation_invariance(ys, alpha, eta, lam):
    ys = np.round(ys)  # integer-valued data keeps the shift exact
    base = coc_pair(ys, CocParams(alpha, eta))
    moved = coc_pair(ys + lam, CocParams(alpha, eta))
    assert moved.r == base.r + lam
    assert moved.e == base.e
    assert moved.v == pytest.approx(base.v + lam, rel=0, abs=1e-9 * (1 + abs(base.v) + abs(lam)))
    assert empirical_quantile(ys + lam, alpha) == empirical_quantile(ys, alpha) + lam


@settings(max_examples=1000)
@given(samples, st.data(), levels, rates)
def test_monotonicity(ys, data, alpha, eta):
    bump = data.draw(arrays(np.float64, ys.shape, elements=st.floats(0, 1e3)))
    params = CocParams(alpha, eta)
    low, high = coc_pair(ys, params), coc_pair(ys + bump, params)
    assert low.r <= high.r
    assert low.v <= high.v + 1e-9 * (1 + abs(high.v))


@settings(max_examples=1000)
@given(samples, finite, finite, rates)
def test_value_nondecreasing_in_capital(ys, a, b, eta):
    r1, r2 = min(a, b), max(a, b)
    d = 1.0 / (1.0 + eta)
    lhs = r1 - d * shortfall_term(ys, r1)
    rhs = r2 - d * shortfall_term(ys, r2)
    assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


@settings(max_examples=1000)
@given(samples, levels, st.sampled_from([0.25, 0.5, 2.0, 4.0, 1024.0]))
def test_quantile_positive_homogeneity(ys, alpha, c):
    assert empirical_quantile(c * ys, alpha) == c * empirical_quantile(ys, alpha)


def test_var_shift_inequality():
    # population quantiles of a sum against shifted marginal quantiles
    rng = np.random.default_rng(7)
    n = 400_000
    x = rng.standard_normal(n)
    z = 0.5 * x + rng.standard_t(4, n)
    alpha = 0.99
    for delta in (0.001, 0.003, 0.005):
        lhs = empirical_quantile(x + z, alpha)
        rhs = empirical_quantile(x, alpha + delta) + empirical_quantile(z, 1 - delta)
        # slack: three order-statistic standard errors of the sum's quantile
        f = np.mean(np.abs(x + z - lhs) < 0.05) / 0.1
        slack = 3 * math.sqrt(alpha * (1 - alpha) / n) / f
        assert lhs <= rhs + slack


# --------------------------------------------------------------------------
# spectral


def test_spectral_uniform_is_negative_mean():
    ys = np.random.default_rng(2).normal(3.0, 2.0, 1000)
    assert empirical_spectral(ys, SpectralDensity.uniform()) == pytest.approx(-ys.mean(), rel=1e-12)


def test_spectral_expected_shortfall_fixture():
    assert empirical_spectral(ONE_TO_TEN, SpectralDensity.expected_shortfall(0.5)) == pytest.approx(-3.0, abs=1e-12)


@settings(max_examples=200)
@given(arrays(np.float64, st.sampled_from([4, 8, 20, 40]), elements=finite), st.sampled_from([0.25, 0.5, 0.75]))
def test_spectral_es_is_lower_tail_mean(ys, gamma):
    k = int(gamma * ys.size)
    expected = -np.sort(ys)[:k].mean()
    got = empirical_spectral(ys, SpectralDensity.expected_shortfall(gamma))
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-6)


@settings(max_examples=200)
@given(samples, shifts)
def test_spectral_cash_additivity(ys, lam):
    m = SpectralDensity([0.0, 0.1, 0.5, 1.0], [5.0, 1.0, 0.2])
    base = empirical_spectral(ys, m)
    assert empirical_spectral(ys + lam, m) == pytest.approx(base - lam, rel=1e-9, abs=1e-6)


def test_spectral_density_validation():
    with pytest.raises(ValueError):
        SpectralDensity([0.0, 0.5, 1.0], [0.5, 1.5])  # increasing
    with pytest.raises(ValueError):
        SpectralDensity([0.0, 1.0], [2.0])  # mass 2
    with pytest.raises(ValueError):
        SpectralDensity([0.0, 0.5], [2.0])
