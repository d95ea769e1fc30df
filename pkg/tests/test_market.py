import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad

from parinvest.market import (DegenerateLawError, MarketParams, partial_power_expectation,
                              quantile_upper, sample_xi, state_price_law)


@pytest.fixture
def base_market():
    return MarketParams(mu=0.05, r=0.03, sigma=0.3, horizon=10.0)


@pytest.fixture
def law(base_market):
    return state_price_law(base_market, 10.0)


def acklam_ppf(p):
    """Independent inverse normal CDF (Acklam's rational approximation, ~1e-9)."""
    a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00]
    b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01]
    c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00]
    d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00]
    plow, phigh = 0.02425, 1 - 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    if p > phigh:
        return -acklam_ppf(1 - p)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)


class TestStatePriceLaw:
    def test_base_parameters(self, base_market, law):
        assert_allclose(base_market.theta, (0.05 - 0.03) / 0.3, rtol=1e-15)
        assert_allclose(law.log_sd, (1.0 / 15.0) * math.sqrt(10.0), rtol=1e-12)
        assert_allclose(law.log_sd, 0.21082, rtol=1e-4)
        assert_allclose(law.log_mean, -(0.03 + 0.5 / 225.0) * 10.0, rtol=1e-13)

    def test_mean_is_discount_factor(self, law):
        assert_allclose(law.mean(), math.exp(-0.3), rtol=1e-14)

    def test_zero_risk_premium_is_degenerate(self):
        m = MarketParams(mu=0.03, r=0.03, sigma=0.3, horizon=5.0)
        law = state_price_law(m, 5.0)
        assert law.degenerate
        assert_allclose(law.mean(), math.exp(-0.15), rtol=1e-14)
        with pytest.raises(DegenerateLawError):
            quantile_upper(law, 0.1)
        with pytest.raises(DegenerateLawError):
            sample_xi(law, 10, seed=1)

    @pytest.mark.parametrize("t", [0.0, -1.0, 10.5])
    def test_time_domain(self, base_market, t):
        with pytest.raises(ValueError):
            state_price_law(base_market, t)

    def test_validation(self):
        with pytest.raises(ValueError):
            MarketParams(mu=0.05, r=0.03, sigma=0.0, horizon=10.0)
        with pytest.raises(ValueError):
            MarketParams(mu=0.05, r=-0.01, sigma=0.3, horizon=10.0)
        with pytest.raises(ValueError):
            MarketParams(mu=0.05, r=0.03, sigma=0.3, horizon=0.0)


class TestQuantileUpper:
    def test_median(self, law):
        assert_allclose(quantile_upper(law, 0.5), math.exp(law.log_mean), rtol=1e-12)

    def test_against_independent_ppf(self, law):
        expected = math.exp(law.log_mean + law.log_sd * acklam_ppf(0.975))
        assert_allclose(quantile_upper(law, 0.025), expected, rtol=1e-7)

    def test_tail_probability_by_mc(self, law):
        xi_bar = quantile_upper(law, 0.025)
        xi = sample_xi(law, 1_000_000, seed=1234)
        p_hat = np.mean(xi > xi_bar)
        se = math.sqrt(0.025 * 0.975 / len(xi))
        assert abs(p_hat - 0.025) < 4 * se

    def test_strictly_decreasing(self, law):
        betas = np.linspace(0.01, 0.99, 25)
        vals = [quantile_upper(law, b) for b in betas]
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.1, 1.5])
    def test_beta_domain(self, law, beta):
        with pytest.raises(ValueError):
            quantile_upper(law, beta)


class TestPartialPowerExpectation:
    def test_total_first_moment(self, law):
        assert_allclose(partial_power_expectation(law, 1.0, 0.0, np.inf),
                        math.exp(-0.3), rtol=1e-13)

    def test_total_probability(self, law):
        assert_allclose(partial_power_expectation(law, 0.0, 0.0, np.inf), 1.0, rtol=1e-13)

    @given(split=st.floats(0.2, 5.0), a=st.floats(-3.0, 2.0))
    @settings(max_examples=60, deadline=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    def test_additivity(self, law, split, a):
        left = partial_power_expectation(law, a, 0.0, split)
        right = partial_power_expectation(law, a, split, np.inf)
        total = partial_power_expectation(law, a, 0.0, np.inf)
        assert_allclose(left + right, total, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("a", [0.0, 1.0, 1.0 - 1.0 / 0.5])
    def test_against_quadrature(self, law, a):
        m, s = law.log_mean, law.log_sd

        def integrand(z):
            return math.exp(a * (m + s * z)) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

        expected, _ = quad(integrand, -14, 14, epsabs=1e-13, epsrel=1e-13, limit=300)
        got = partial_power_expectation(law, a, 0.0, np.inf)
        assert_allclose(got, expected, rtol=1e-10)

    def test_windowed_against_quadrature(self, law):
        a, lo, hi = -1.5, 0.4, 1.3
        m, s = law.log_mean, law.log_sd

        def integrand(z):
            return math.exp(a * (m + s * z)) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

        z_lo, z_hi = (math.log(lo) - m) / s, (math.log(hi) - m) / s
        expected, _ = quad(integrand, z_lo, z_hi, epsabs=1e-14)
        assert_allclose(partial_power_expectation(law, a, lo, hi), expected, rtol=1e-10)

    def test_errors(self, law):
        with pytest.raises(ValueError):
            partial_power_expectation(law, 1.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            partial_power_expectation(law, float("nan"), 0.0, 1.0)
        with pytest.raises(ValueError):
            partial_power_expectation(law, 1.0, float("nan"), 1.0)


class TestSampling:
    def test_reproducible_bit_for_bit(self, law):
        a = sample_xi(law, 1000, seed=7, antithetic=True)
        b = sample_xi(law, 1000, seed=7, antithetic=True)
        assert np.array_equal(a, b)

    def test_antithetic_pair_product(self, law):
        xi = sample_xi(law, 8, seed=3, antithetic=True)
        prods = xi[0::2] * xi[1::2]
        assert_allclose(prods, math.exp(2 * law.log_mean), rtol=1e-12)

    def test_mc_mean_matches_discount(self, law):
        xi = sample_xi(law, 1_000_000, seed=42)
        se = np.std(xi) / math.sqrt(len(xi))
        assert abs(np.mean(xi) - math.exp(-0.3)) < 4 * se

    def test_odd_length_antithetic(self, law):
        assert len(sample_xi(law, 7, seed=1, antithetic=True)) == 7

    def test_zero_samples_rejected(self, law):
        with pytest.raises(ValueError):
            sample_xi(law, 0, seed=1)
