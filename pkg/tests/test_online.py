import itertools
import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import logsumexp

from hierregret import likelihoods as lk
from hierregret import online as ol
from hierregret import priors as pr
from hierregret.data import Dataset, Example
from hierregret.exceptions import DomainError
from hierregret.risk import unit_ball_features


def _regression(rng, T, n, theta=None, noise=1.0):
    X = unit_ball_features(rng, T, n)
    theta = rng.normal(size=n) if theta is None else theta
    return Dataset(X, X @ theta + math.sqrt(noise) * rng.normal(size=T))


def _binary(rng, T, n):
    X = unit_ball_features(rng, T, n)
    return Dataset(X, rng.choice([-1.0, 1.0], size=T))


class TestExactPaths:
    def test_single_example(self):
        run = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 1), [Example(np.array([1.0]), 0.0)])
        np.testing.assert_allclose(run.cumulative_loss, 0.5 * math.log(4 * math.pi))
        assert run.method == "conjugate_exact"

    def test_empty_data(self):
        run = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 2), [])
        assert run.cumulative_loss == 0.0
        assert ol.posterior_kl_from_prior(run) == 0.0

    def test_iso_matches_marginal_likelihood(self, rng):
        ds = _regression(rng, 30, 3, noise=0.5)
        run = ol.run_online(lk.GaussianRegression(0.5), pr.IsoGaussian(2.0, 3), ds)
        np.testing.assert_allclose(run.cumulative_loss,
                                   -ol.gaussian_log_marginal(ds.X, ds.y, 2.0 * np.eye(3), 0.5), rtol=1e-10)

    def test_order_invariance(self, rng):
        ds = _regression(rng, 25, 2)
        a = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 2), ds).cumulative_loss
        b = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 2),
                          ds.permuted(rng.permutation(25))).cumulative_loss
        np.testing.assert_allclose(a, b, rtol=1e-10)

    def test_hierarchical_matches_joint_gaussian(self, rng):
        prior = pr.HierGaussOneLevel(0.7, 1.3, 3, 2)
        X = unit_ball_features(rng, 24, 2)
        src = (np.arange(24) % 3) + 1
        ds = Dataset(X, rng.normal(size=24), src)
        run = ol.run_online(lk.GaussianRegression(1.0), prior, ds)
        D = ds.design(3)
        np.testing.assert_allclose(run.cumulative_loss,
                                   -ol.gaussian_log_marginal(D, ds.y, pr.gaussian_covariance(prior), 1.0),
                                   rtol=1e-10)

    def test_two_level_matches_joint_gaussian(self, rng):
        prior = pr.HierGaussTwoLevel(0.5, 0.8, 1.0, (1, 1, 2), 2)
        X = unit_ball_features(rng, 15, 2)
        ds = Dataset(X, rng.normal(size=15), rng.integers(1, 4, size=15))
        run = ol.run_online(lk.GaussianRegression(2.0), prior, ds)
        np.testing.assert_allclose(run.cumulative_loss,
                                   -ol.gaussian_log_marginal(ds.design(3), ds.y, pr.gaussian_covariance(prior),
                                                             2.0), rtol=1e-10)

    @pytest.mark.parametrize("df", [0.5, 1.0, 5.0, 100.0])
    def test_mvt_matches_quadrature(self, rng, df):
        prior = pr.MultivariateT(df, 1.5, 2)
        ds = _regression(rng, 12, 2)
        run = ol.run_online(lk.GaussianRegression(1.0), prior, ds)
        assert run.method == "quadrature"
        np.testing.assert_allclose(run.cumulative_loss,
                                   -ol.mvt_log_marginal_quadrature(prior, ds.X, ds.y, 1.0), rtol=1e-7)

    def test_spike_slab_matches_enumeration(self, rng):
        n, p, v = 3, 0.4, 2.0
        theta = np.array([1.5, 0.0, 0.0])
        ds = _regression(rng, 20, n, theta)
        run = ol.run_online(lk.GaussianRegression(1.0), pr.SpikeSlab(p, v, n), ds)
        terms = []
        for mask in itertools.product([False, True], repeat=n):
            S = np.array(mask)
            k = int(S.sum())
            ll = ol.gaussian_log_marginal(ds.X[:, S], ds.y, v * np.eye(k), 1.0) if k else \
                float(np.sum(stats.norm.logpdf(ds.y)))
            terms.append(k * math.log(1 - p) + (n - k) * math.log(p) + ll)
        np.testing.assert_allclose(run.cumulative_loss, -logsumexp(terms), rtol=1e-10)

    def test_kl_routes_agree(self, rng):
        ds = _regression(rng, 15, 2)
        for prior in (pr.IsoGaussian(1.0, 2), pr.SpikeSlab(0.5, 1.0, 2)):
            routes = ol.posterior_kl_routes(ol.run_online(lk.GaussianRegression(1.0), prior, ds))
            np.testing.assert_allclose(routes["loss_difference"], routes["closed_form"], rtol=1e-8)

    def test_exact_requires_conjugacy(self, rng):
        with pytest.raises(DomainError):
            ol.run_online(lk.BinaryLogistic(), pr.IsoGaussian(1.0, 2), _binary(rng, 5, 2), method="exact")


class TestParticlePath:
    def test_requires_rng(self, rng):
        with pytest.raises(DomainError):
            ol.run_online(lk.BinaryLogistic(), pr.IsoGaussian(1.0, 2), _binary(rng, 5, 2))

    def test_matches_exact_regression(self, rng):
        ds = _regression(rng, 20, 2)
        exact = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 2), ds).cumulative_loss
        run = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 2), ds, method="smc", rng=rng)
        se = run.diagnostics["cumulative_standard_error"]
        assert run.method == "smc"
        assert abs(run.cumulative_loss - exact) <= max(4 * se, 1e-3)

    def test_binary_matches_quadrature(self, rng):
        X = unit_ball_features(rng, 15, 1)
        y = rng.choice([-1.0, 1.0], size=15)
        spec = lk.BinaryLogistic()

        def integrand(t):
            return math.exp(-float(np.sum(lk.neg_log_loss(spec, X[:, 0] * t, y)))) * stats.norm.pdf(t)

        oracle = -math.log(integrate.quad(integrand, -12, 12, epsabs=0, epsrel=1e-12)[0])
        run = ol.run_online(spec, pr.IsoGaussian(1.0, 1), Dataset(X, y), rng=rng, num_particles=8192)
        assert abs(run.cumulative_loss - oracle) <= max(4 * run.diagnostics["cumulative_standard_error"], 2e-3)

    def test_laplace_matches_quadrature(self, rng):
        ds = _regression(rng, 10, 1)
        spec = lk.GaussianRegression(1.0)

        def integrand(t):
            return math.exp(-float(np.sum(lk.neg_log_loss(spec, ds.X[:, 0] * t, ds.y)))) * 0.5 * math.exp(-abs(t))

        oracle = -math.log(integrate.quad(integrand, -30, 30, points=[0.0], epsabs=0, epsrel=1e-12, limit=200)[0])
        run = ol.run_online(spec, pr.Laplace(1.0, 1), ds, rng=rng, num_particles=8192)
        assert abs(run.cumulative_loss - oracle) <= max(4 * run.diagnostics["cumulative_standard_error"], 2e-3)

    def test_seeded_reproducibility(self):
        ds = _binary(np.random.default_rng(1), 10, 2)
        a = ol.run_online(lk.BinaryLogistic(), pr.IsoGaussian(1.0, 2), ds, rng=np.random.default_rng(9),
                          num_particles=256)
        b = ol.run_online(lk.BinaryLogistic(), pr.IsoGaussian(1.0, 2), ds, rng=np.random.default_rng(9),
                          num_particles=256)
        np.testing.assert_array_equal(a.per_step_loss, b.per_step_loss)

    def test_multiclass_runs(self, rng):
        X = unit_ball_features(rng, 8, 2)
        y = rng.integers(1, 4, size=8).astype(float)
        run = ol.run_online(lk.MultiClassLogistic(3), pr.IsoGaussian(1.0, 6), Dataset(X, y), rng=rng,
                            num_particles=512)
        assert run.per_step_loss.shape == (8,)
        # the exact first prediction is uniform by symmetry
        se = run.diagnostics["step_standard_error"][0]
        assert abs(run.per_step_loss[0] - math.log(3)) <= 4 * se


class TestPredictive:
    def test_regression_predictive(self):
        state = ol.initial_mixture_state(pr.IsoGaussian(1.0, 1))
        pred = ol.posterior_predictive(state, lk.GaussianRegression(1.0), np.array([1.0]))
        np.testing.assert_allclose([pred.mean, pred.variance], [0.0, 2.0])
        np.testing.assert_allclose(pred.logpdf(0.0), stats.norm(0, math.sqrt(2)).logpdf(0.0))

    def test_binary_tiny_prior_is_uniform(self):
        state = ol.initial_mixture_state(pr.IsoGaussian(1e-10, 2))
        pred = ol.posterior_predictive(state, lk.BinaryLogistic(), np.array([0.6, 0.8]))
        np.testing.assert_allclose(pred.probabilities, [0.5, 0.5], atol=1e-9)

    def test_binary_quadrature_matches_mc(self, rng):
        # N(0.7, 4) in information form: precision 1/4, shift 0.7/4
        state = ol.GaussianMixtureState(np.zeros(1), np.array([[[0.25]]]), np.array([[0.175]]))
        pred = ol.posterior_predictive(state, lk.BinaryLogistic(), np.array([1.0]))
        draws = rng.normal(0.7, 2.0, size=1_000_000)
        mc = np.mean(1 / (1 + np.exp(draws)))  # p(+1 | z) = 1 / (1 + e^z)
        np.testing.assert_allclose(pred.probabilities[1], mc, atol=2e-3)
        np.testing.assert_allclose(pred.probabilities.sum(), 1.0)

    def test_multiclass_symmetric_prior(self, rng):
        state = ol.initial_mixture_state(pr.IsoGaussian(1.0, 6))
        pred = ol.posterior_predictive(state, lk.MultiClassLogistic(3), np.array([0.3, 0.4]), rng=rng)
        np.testing.assert_allclose(pred.probabilities, np.full(3, 1 / 3), atol=5e-3)


class TestCompression:
    def _setup(self, rng):
        grid = np.linspace(-3, 3, 7)[:, None]
        prior = rng.dirichlet(np.ones(7))
        X = unit_ball_features(rng, 5, 1)
        return grid, prior, Dataset(X, rng.choice([-1.0, 1.0], 5))

    def test_equality_at_posterior(self, rng):
        grid, prior, ds = self._setup(rng)
        Q = ol.discrete_posterior(prior, ol.grid_losses(grid, lk.BinaryLogistic(), ds))
        lhs, rhs = ol.compression_check(grid, prior, lk.BinaryLogistic(), ds, Q)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_inequality_for_random_q(self, rng):
        grid, prior, ds = self._setup(rng)
        for _ in range(50):
            lhs, rhs = ol.compression_check(grid, prior, lk.BinaryLogistic(), ds, rng.dirichlet(np.ones(7)))
            assert lhs <= rhs + 1e-12

    def test_invalid_masses(self, rng):
        grid, prior, ds = self._setup(rng)
        with pytest.raises(DomainError):
            ol.compression_check(grid, prior, lk.BinaryLogistic(), ds, np.full(7, 0.2))
