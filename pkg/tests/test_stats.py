import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from defer_causal.stats import (binomial_test_half, normal_cdf, normal_quantile, normal_sf,
                                wald_inference)


def series_cdf(z: float) -> float:
    """Maclaurin series of the standard normal CDF in 60-digit arithmetic."""
    with mpmath.workdps(60):
        x = mpmath.mpf(z)
        total, term, n = mpmath.mpf(0), x, 0
        while True:
            contrib = term / (2 * n + 1)
            total += contrib
            if n > 10 and abs(contrib) < mpmath.mpf(10) ** -40:
                break
            n += 1
            term *= -x * x / (2 * n)
        return float(mpmath.mpf(0.5) + total / mpmath.sqrt(2 * mpmath.pi))


def test_normal_cdf_matches_series_on_grid():
    worst = max(abs(normal_cdf(z) - series_cdf(z)) for z in [i / 20 for i in range(-160, 161)])
    assert worst < 1e-7


def test_normal_tails_keep_relative_precision():
    with mpmath.workdps(40):
        exact = float(mpmath.ncdf(-30))
    assert normal_cdf(-30.0) == pytest.approx(exact, rel=1e-12)
    assert normal_sf(30.0) == pytest.approx(exact, rel=1e-12)


@given(st.floats(-37, 37))
def test_cdf_sf_symmetry(z):
    assert normal_cdf(z) + normal_sf(z) == pytest.approx(1.0, abs=1e-15)
    assert normal_cdf(-z) == pytest.approx(normal_sf(z), rel=1e-12, abs=1e-300)


@given(st.floats(1e-12, 1 - 1e-12))
def test_quantile_inverts_cdf(p):
    assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(p):
    with pytest.raises(ValueError):
        normal_quantile(p)


def test_wald_frozen_values():
    lo, hi, p = wald_inference(0.5, 0.25)
    assert p == pytest.approx(0.04550026389635842, rel=1e-12)
    assert lo == pytest.approx(0.010009003864986, abs=1e-12)
    assert hi == pytest.approx(0.989990996135014, abs=1e-12)


def test_wald_zero_se():
    assert wald_inference(0.0, 0.0) == (0.0, 0.0, 1.0)
    assert wald_inference(0.2, 0.0) == (0.2, 0.2, 0.0)


@pytest.mark.parametrize("se,level", [(-1.0, 0.95), (float("nan"), 0.95), (1.0, 0.0), (1.0, 1.0)])
def test_wald_rejects_bad_input(se, level):
    with pytest.raises(ValueError):
        wald_inference(0.1, se, level)


@given(st.floats(-10, 10), st.floats(1e-6, 10), st.floats(0.5, 0.999))
def test_wald_interval_contains_point_and_p_in_unit(point, se, level):
    lo, hi, p = wald_inference(point, se, level)
    assert lo <= point <= hi
    assert 0.0 <= p <= 1.0
    assert (p < 1 - level) == (lo > 0 or hi < 0) or math.isclose(p, 1 - level, rel_tol=1e-9)


def brute_binomial(k: int, n: int) -> float:
    probs = [math.comb(n, j) / 2 ** n for j in range(n + 1)]
    obs = probs[k]
    return min(1.0, sum(q for q in probs if q <= obs * (1 + 1e-12)))


def test_binomial_frozen_values():
    assert binomial_test_half(0, 20) == 2 / 2 ** 20
    assert binomial_test_half(5, 10) == 1.0
    assert binomial_test_half(2, 10) == 112 / 1024


@given(st.integers(1, 150).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_binomial_matches_brute_force_and_is_symmetric(kn):
    k, n = kn
    p = binomial_test_half(k, n)
    assert p == pytest.approx(brute_binomial(k, n), rel=1e-9)
    assert p == binomial_test_half(n - k, n)
    assert 0.0 < p <= 1.0


def test_binomial_large_n_is_finite():
    p = binomial_test_half(5200, 10000)
    assert 0.0 < p < 1e-3


@pytest.mark.parametrize("k,n", [(0, 0), (-1, 5), (6, 5)])
def test_binomial_domain(k, n):
    with pytest.raises(ValueError):
        binomial_test_half(k, n)
