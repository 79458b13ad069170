import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import gammaln

from hierregret import divergences as dv
from hierregret.exceptions import DomainError


class TestGaussianGaussian:
    def test_identical_is_zero(self):
        S = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert dv.kl_gaussian_gaussian(np.ones(2), S, np.ones(2), S).value == 0.0

    def test_unit_shift(self):
        np.testing.assert_allclose(dv.kl_gaussian_gaussian([0.0], [[1.0]], [1.0], [[1.0]]).value, 0.5)

    def test_scale_change(self):
        res = dv.kl_gaussian_gaussian(np.zeros(2), np.eye(2), np.zeros(2), 2 * np.eye(2))
        np.testing.assert_allclose(res.value, 0.5 * (math.log(4.0) - 1.0))
        assert res.kind == "exact"

    def test_non_pd_rejected(self):
        with pytest.raises(DomainError):
            dv.kl_gaussian_gaussian(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2), np.eye(2))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 10_000))
    def test_nonnegative(self, n, seed):
        r = np.random.default_rng(seed)
        A, B = r.normal(size=(n, n)), r.normal(size=(n, n))
        val = dv.kl_gaussian_gaussian(r.normal(size=n), A @ A.T + 0.1 * np.eye(n),
                                      r.normal(size=n), B @ B.T + 0.1 * np.eye(n)).value
        assert val >= -1e-12


class TestLambda:
    def test_values(self):
        np.testing.assert_allclose(dv.lambda_nu_k(2, 2), 1.0)
        np.testing.assert_allclose(dv.lambda_nu_k(1, 1), 2.0)
        np.testing.assert_allclose(dv.lambda_nu_k(1e8, 4), 4.0, rtol=1e-6)

    @pytest.mark.parametrize("nu,k", [(0.5, 1), (1.0, 2), (2.0, 3), (5.0, 4), (30.0, 5)])
    def test_valid_bound_dominates_gamma_ratio(self, nu, k):
        exact = gammaln(nu / 2) + 0.5 * k * math.log(nu) - gammaln((nu + k) / 2)
        np.testing.assert_allclose(dv.log_gamma_ratio(nu, k), exact)
        assert dv.log_gamma_ratio_bound(nu, k) >= exact - 1e-12

    def test_short_factorial_understates_for_k2(self):
        assert dv.log_lambda_nu_k(2.0, 2) < dv.log_gamma_ratio(2.0, 2)


class TestGaussianT:
    def test_large_nu_is_near_zero(self):
        val = dv.kl_gaussian_t_upper([0.0], [[1.0]], [0.0], [[1.0]], 1e8).value
        assert abs(val) < 1e-4

    def test_cauchy_bound_above_mc(self, rng):
        ub = dv.kl_gaussian_t_upper([0.0], [[1.0]], [0.0], [[1.0]], 1.0).value
        mc = dv.kl_monte_carlo(dv.gaussian_sampler([0.0], [[1.0]]), dv.gaussian_log_pdf([0.0], [[1.0]]),
                               dv.t_log_pdf([0.0], [[1.0]], 1.0), 1_000_000, rng)
        assert 0.0 < mc.value <= ub

    def test_short_factorial_can_undercut_the_divergence(self, rng):
        """A falling factorial started one step too high at a sharp Q it drops below the true KL."""
        mu, S_q, S_p = np.zeros(2), 1e-4 * np.eye(2), np.eye(2)
        mc = dv.kl_monte_carlo(dv.gaussian_sampler(mu, S_q), dv.gaussian_log_pdf(mu, S_q),
                               dv.t_log_pdf(mu, S_p, 2.0), 1_000_000, rng)
        valid = dv.kl_gaussian_t_upper(mu, S_q, mu, S_p, 2.0).value
        short = dv.kl_gaussian_t_upper(mu, S_q, mu, S_p, 2.0, constant="short_factorial").value
        assert valid >= mc.value - 3 * mc.standard_error
        assert short < mc.value - 3 * mc.standard_error


class TestGaussianLaplace:
    def test_value_at_origin(self):
        expected = 0.5 * math.log(2) + math.sqrt(2 / math.pi) - 0.5 * math.log(math.pi * math.e)
        np.testing.assert_allclose(dv.kl_gaussian_laplace_upper(0.0, 1.0, 1.0).value, expected)

    def test_exact_matches_quadrature(self):
        for mu, var, beta in [(0.0, 1.0, 1.0), (2.0, 0.5, 0.7), (-1.5, 3.0, 2.0)]:
            np.testing.assert_allclose(dv.kl_gaussian_laplace_exact(mu, var, beta).value,
                                       dv.kl_gaussian_laplace_quadrature(mu, var, beta).value, rtol=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.01, 4), st.floats(0.2, 5))
    def test_upper_bound_dominates(self, mu, var, beta):
        ub = dv.kl_gaussian_laplace_upper(mu, var, beta).value
        assert ub >= dv.kl_gaussian_laplace_exact(mu, var, beta).value - 1e-10

    def test_half_mean_term_fails_away_from_origin(self):
        exact = dv.kl_gaussian_laplace_exact(2.0, 1.0, 1.0).value
        assert dv.kl_gaussian_laplace_upper(2.0, 1.0, 1.0, half_mean_term=True).value < exact
        assert dv.kl_gaussian_laplace_upper(2.0, 1.0, 1.0).value >= exact

    def test_large_mu_asymptote(self):
        mu, var, beta = 200.0, 0.5, 1.5
        gap = dv.kl_gaussian_laplace_upper(mu, var, beta).value - mu / beta
        np.testing.assert_allclose(gap, 0.5 * math.log(2 * beta**2 / var) - 0.5 * math.log(math.pi * math.e),
                                   atol=1e-9)


class TestMonteCarlo:
    def test_q_equals_p(self, rng):
        lp = dv.gaussian_log_pdf(np.zeros(2), np.eye(2))
        res = dv.kl_monte_carlo(dv.gaussian_sampler(np.zeros(2), np.eye(2)), lp, lp, 10_000, rng)
        assert res.value == 0.0 and res.kind == "monte_carlo"

    def test_unit_shift(self, rng):
        res = dv.kl_monte_carlo(dv.gaussian_sampler([0.0], [[1.0]]), dv.gaussian_log_pdf([0.0], [[1.0]]),
                                dv.gaussian_log_pdf([1.0], [[1.0]]), 1_000_000, rng)
        assert abs(res.value - 0.5) <= 3 * res.standard_error

    def test_t_log_pdf_matches_scipy(self, rng):
        S = np.array([[1.5, 0.2], [0.2, 0.8]])
        x = rng.normal(size=(5, 2))
        np.testing.assert_allclose(dv.t_log_pdf(np.ones(2), S, 3.0)(x),
                                   stats.multivariate_t(np.ones(2), S, df=3.0).logpdf(x))

    def test_minimum_sample_count(self, rng):
        lp = dv.gaussian_log_pdf([0.0], [[1.0]])
        with pytest.raises(DomainError):
            dv.kl_monte_carlo(dv.gaussian_sampler([0.0], [[1.0]]), lp, lp, 10, rng)
