import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import beta

from robustmc.binom import (ConfidenceBounds, Method, SampleSizeParams, TrialCounts, binomial_cdf,
                            binomial_pmf, clopper_pearson_limits, clopper_pearson_table,
                            explicit_limits, explicit_table, explicit_theta, massart_tail_bound,
                            normal_approx_limits, required_sample_size)


def exact_cdf(n, k, p):
    p = Fraction(p)
    return float(sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(k + 1)))


# --- binomial_cdf -----------------------------------------------------------

def test_cdf_small_examples():
    assert binomial_cdf(2, 1, 0.5) == pytest.approx(0.75, abs=1e-15)
    assert binomial_cdf(37, 37, 0.3) == 1.0
    assert binomial_cdf(10, 3, 0.2) == pytest.approx(0.879126, abs=1e-6)


@pytest.mark.parametrize("n,k,p,expected", [
    # mpmath 40-digit lighter-tail sums at the exact binary value of p
    (10**6, 500, 0.0005, 0.5118911220705677183),
    (10**6, 499000, 0.5, 0.02280414993269104321),
    (10**6, 10**6 - 1, 0.999999, 0.6321207427789335288),
    (1000, 3, 0.01, 0.010072654772014378802),
    (100000, 30210, 0.3, 0.92676031854898959424),
    (10**6, 1000, 0.001, 0.50840936822077554494),
])
def test_cdf_large_n_against_mpmath(n, k, p, expected):
    assert abs(binomial_cdf(n, k, p) - expected) < 1e-12


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 60), data=st.data())
def test_cdf_matches_exact_rational_sum(n, data):
    k = data.draw(st.integers(0, n))
    p = data.draw(st.floats(0.0, 1.0))
    assert abs(binomial_cdf(n, k, p) - exact_cdf(n, k, p)) < 1e-13


def test_cdf_vectorised_agrees_with_scalar():
    n = 300
    k = np.arange(n + 1)
    p = np.linspace(0, 1, n + 1)
    vec = binomial_cdf(n, k, p)
    sca = np.array([binomial_cdf(n, int(a), float(b)) for a, b in zip(k, p)])
    assert np.max(np.abs(vec - sca)) < 1e-12


@pytest.mark.parametrize("args", [(10, -1, 0.5), (10, 11, 0.5), (10, 3, 1.2), (10, 3, -0.1),
                                  (10, 2.5, 0.5), (0, 0, 0.5)])
def test_cdf_domain_errors(args):
    with pytest.raises(ValueError):
        binomial_cdf(*args)


def test_pmf_sums_to_one():
    for n in (1, 7, 100, 5000):
        for p in (0.001, 0.3, 0.5, 0.999):
            assert math.fsum(binomial_pmf(n, np.arange(n + 1.0), p)) == pytest.approx(1.0, abs=1e-13)


def test_cdf_strictly_decreasing_in_p():
    grid = np.linspace(0.01, 0.99, 99)
    for n in range(1, 51):
        for k in range(n):
            vals = binomial_cdf(n, np.full(grid.size, k), grid)
            # near 1 the cdf rounds to 1.0; the upper tail P{K > k} carries the signal there
            tail = binomial_cdf(n, np.full(grid.size, n - k - 1), 1.0 - grid)
            assert np.all((np.diff(vals) < 0) | (np.diff(tail) > 0)), (n, k)


# --- Clopper-Pearson ----------------------------------------------------------

def test_cp_closed_form_edges():
    b = clopper_pearson_limits(TrialCounts(10, 0), 0.05)
    assert b.lower == 0.0
    assert b.upper == pytest.approx(1 - 0.025 ** 0.1, abs=1e-10)
    b = clopper_pearson_limits(TrialCounts(10, 10), 0.05)
    assert b.upper == 1.0
    assert b.lower == pytest.approx(0.025 ** 0.1, abs=1e-10)
    assert b.method is Method.CLOPPER_PEARSON


def test_cp_symmetry():
    lo = clopper_pearson_limits((10, 2), 0.05).lower
    up = clopper_pearson_limits((10, 8), 0.05).upper
    assert lo == pytest.approx(1 - up, abs=1e-10)


@pytest.mark.parametrize("n,delta", [(1, 0.1), (17, 0.01), (200, 0.001), (1000, 0.01)])
def test_cp_table_matches_beta_quantiles(n, delta):
    lo, up = clopper_pearson_table(n, delta)
    k = np.arange(n + 1)
    ref_lo = beta.ppf(delta / 2, k[1:], n - k[1:] + 1)
    ref_up = beta.ppf(1 - delta / 2, k[:-1] + 1, n - k[:-1])
    assert lo[0] == 0.0 and up[-1] == 1.0
    assert np.max(np.abs(lo[1:] - ref_lo)) < 1e-10
    assert np.max(np.abs(up[:-1] - ref_up)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 400), data=st.data(), delta=st.sampled_from([0.2, 0.05, 0.01, 0.001]))
def test_cp_scalar_agrees_with_table_and_lower_below_upper(n, data, delta):
    k = data.draw(st.integers(0, n))
    b = clopper_pearson_limits((n, k), delta)
    assert b.lower < b.upper
    ref_lo = 0.0 if k == 0 else beta.ppf(delta / 2, k, n - k + 1)
    ref_up = 1.0 if k == n else beta.ppf(1 - delta / 2, k + 1, n - k)
    assert b.lower == pytest.approx(ref_lo, abs=1e-10)
    assert b.upper == pytest.approx(ref_up, abs=1e-10)


# --- explicit formula --------------------------------------------------------

def test_explicit_examples():
    assert explicit_theta(0.01) == pytest.approx(0.21233156, abs=1e-8)
    b = explicit_limits((1000, 1000), 0.01)
    assert b.lower == pytest.approx(0.992969, abs=1e-5)
    assert b.upper == 1.0
    b = explicit_limits((65, 61), 0.01)
    assert b.upper == pytest.approx(0.99773, abs=1e-4)
    assert b.upper < 0.999
    for n in (1, 10, 12345):
        assert explicit_limits((n, 0), 0.3).lower == 0.0


@settings(max_examples=300, deadline=None)
@given(n=st.integers(1, 10**6), data=st.data(), delta=st.floats(1e-9, 0.999))
def test_explicit_symmetry_and_range(n, data, delta):
    k = data.draw(st.integers(0, n))
    a = explicit_limits((n, k), delta)
    b = explicit_limits((n, n - k), delta)
    assert 0.0 <= a.lower <= a.upper <= 1.0
    assert b.upper == pytest.approx(1.0 - a.lower, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 300), delta=st.sampled_from([0.3, 0.1, 0.01, 0.001, 1e-6]))
def test_explicit_contains_clopper_pearson(n, delta):
    elo, eup = explicit_table(n, delta)
    clo, cup = clopper_pearson_table(n, delta)
    assert np.all(elo <= clo) and np.all(clo < cup) and np.all(cup <= eup)


def test_explicit_table_agrees_with_scalar():
    lo, up = explicit_table(50, 0.01)
    for k in range(51):
        b = explicit_limits((50, k), 0.01)
        assert (b.lower, b.upper) == (lo[k], up[k])


# --- normal approximation ----------------------------------------------------

def test_normal_approx_examples():
    b = normal_approx_limits((1000, 500), 0.05)
    assert b.lower == pytest.approx(0.46900, abs=1e-4)
    assert b.upper == pytest.approx(0.53100, abs=1e-4)
    assert b.rigorous is False
    z = normal_approx_limits((100, 0), 0.05)
    assert (z.lower, z.upper) == (0.0, 0.0)
    s = normal_approx_limits((64, 32), 0.01)
    assert s.lower + s.upper == pytest.approx(1.0, abs=1e-15)


# --- Massart -----------------------------------------------------------------

def test_massart_example():
    # exp(-1/0.497778); the bound evaluates to 0.134132
    assert massart_tail_bound(100, 0.5, 0.1, "upper") == pytest.approx(0.134132, abs=1e-5)
    assert massart_tail_bound(100, 0.3, 1e-12, "upper") == pytest.approx(1.0, abs=1e-9)
    assert massart_tail_bound(10, 0.9, 0.5, "upper") == 1.0


@settings(max_examples=300, deadline=None)
@given(n=st.integers(1, 10**5), p=st.floats(0.001, 0.999), eps=st.floats(1e-6, 2.0))
def test_massart_lower_upper_mirror(n, p, eps):
    assert massart_tail_bound(n, p, eps, "lower") == pytest.approx(
        massart_tail_bound(n, 1 - p, eps, "upper"), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 100), p=st.floats(0.01, 0.99), eps=st.floats(0.001, 0.99))
def test_massart_dominates_exact_tails(n, p, eps):
    # P{K/n - p >= eps} and P{K/n - p <= -eps}
    k_up = math.ceil(n * (p + eps) - 1e-9)
    upper_tail = 0.0 if k_up > n else 1.0 - (binomial_cdf(n, k_up - 1, p) if k_up >= 1 else 0.0)
    k_lo = math.floor(n * (p - eps) + 1e-9)
    lower_tail = 0.0 if k_lo < 0 else binomial_cdf(n, k_lo, p)
    assert upper_tail <= massart_tail_bound(n, p, eps, "upper") + 1e-12
    assert lower_tail <= massart_tail_bound(n, p, eps, "lower") + 1e-12


# --- sample size -------------------------------------------------------------

def test_sample_sizes():
    assert required_sample_size(epsilon=0.001, delta=0.001, alpha=0.5) == 50631
    assert required_sample_size(epsilon=0.01, delta=0.01, alpha=0.2) == 24495
    assert required_sample_size(SampleSizeParams(0.01, 0.01, 0.5)) == 3503


@settings(max_examples=300)
@given(eps=st.floats(1e-4, 0.999), delta=st.floats(1e-6, 0.999), alpha=st.floats(0.01, 0.999))
def test_sample_size_is_least_integer_above_bound(eps, delta, alpha):
    bound = 2 * (1 - eps + alpha * eps / 3) * (1 - alpha / 3) * math.log(2 / delta) / (alpha**2 * eps)
    n = required_sample_size(epsilon=eps, delta=delta, alpha=alpha)
    assert n > bound and n - 1 <= bound


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_parameter_validation(bad):
    with pytest.raises(ValueError):
        SampleSizeParams(bad, 0.1, 0.1)
    with pytest.raises(ValueError):
        explicit_limits((10, 3), bad)
    with pytest.raises(ValueError):
        clopper_pearson_limits((10, 3), bad)


def test_counts_validation_and_bounds_helpers():
    with pytest.raises(ValueError):
        TrialCounts(0, 0)
    with pytest.raises(ValueError):
        TrialCounts(5, 6)
    b = ConfidenceBounds(0.2, 0.4, 0.1, Method.EXPLICIT)
    assert b.contains(0.3) and not b.contains(0.5)
    assert b.width == pytest.approx(0.2)
