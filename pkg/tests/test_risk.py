import math

import numpy as np
import pytest

from hierregret import likelihoods as lk
from hierregret import online as ol
from hierregret import priors as pr
from hierregret import risk as rk
from hierregret.bounds import gaussian_regret_bound
from hierregret.data import Dataset
from hierregret.exceptions import DomainError


class TestFormulas:
    def test_kappa_prime(self):
        assert rk.pac_bayes_bound(0.0, 100, 1.0, 0.05).kappa_prime == 2.0

    def test_values(self):
        np.testing.assert_allclose(rk.pac_bayes_bound(0.0, 100).bound, math.sqrt(math.log(40) / 100))
        np.testing.assert_allclose(rk.regret_to_risk_bound(0.0, 1, 1.0, 0.5).bound, math.sqrt(math.log(4)))

    def test_accepts_bound_report(self):
        rep = gaussian_regret_bound([1.0], 50, 1.0, 1.0)
        np.testing.assert_allclose(rk.regret_to_risk_bound(rep, 50).bound, rk.regret_to_risk_bound(rep.total, 50).bound)

    def test_rate_vanishes(self):
        vals = [rk.regret_to_risk_bound(gaussian_regret_bound([1.0], T, 1.0, 1.0), T).bound for T in (10, 10**3, 10**6)]
        assert vals[0] > vals[1] > vals[2]

    @pytest.mark.parametrize("kw", [dict(kappa=0.5), dict(delta=0.0), dict(delta=1.0), dict(T=0)])
    def test_domain(self, kw):
        args = dict(kl_pt_p0=0.1, T=10, kappa=1.0, delta=0.05) | kw
        with pytest.raises(DomainError):
            rk.pac_bayes_bound(**args)


class TestLosses:
    def test_expected_clipped_squared_matches_mc(self, rng):
        for a, s in [(0.0, 1.0), (0.8, 0.3), (-2.0, 0.5), (0.1, 3.0)]:
            z = rng.normal(a, s, size=1_000_000)
            mc = np.minimum(1.0, z**2)
            np.testing.assert_allclose(rk.expected_clipped_squared(a, s), mc.mean(), atol=4 * mc.std() / 1000)

    def test_degenerate_spread(self):
        np.testing.assert_allclose(rk.expected_clipped_squared(np.array([0.5, 2.0]), np.zeros(2)), [0.25, 1.0])

    def test_zero_one(self):
        spec = lk.BinaryLogistic()
        # z > 0 favours y = -1 under p(y | z) = 1 / (1 + e^{y z})
        np.testing.assert_array_equal(rk.zero_one_loss(spec, np.array([2.0, -2.0]), np.array([-1.0, -1.0])), [0, 1])


class TestGibbs:
    def test_point_mass_perfect_fit(self):
        X = np.array([[1.0], [-1.0]])
        y = np.array([-1.0, 1.0])
        est = rk.gibbs_risk_estimate(lambda r, s: np.full((s, 1), 3.0), lk.BinaryLogistic(), Dataset(X, y),
                                     num_draws=50, rng=np.random.default_rng(0))
        assert est.train == 0.0

    def test_noise_labels_give_chance(self, rng):
        X = rk.unit_ball_features(rng, 4000, 2)
        y = rng.choice([-1.0, 1.0], 4000)
        state = ol.initial_mixture_state(pr.IsoGaussian(1.0, 2))
        est = rk.gibbs_risk_estimate(state, lk.BinaryLogistic(), Dataset(X[:10], y[:10]), Dataset(X, y),
                                     num_draws=2000, rng=rng)
        assert abs(est.test - 0.5) <= 3 * est.test_se + 0.01

    def test_unbounded_loss_rejected(self, rng):
        with pytest.raises(DomainError):
            rk.gibbs_risk_estimate(lambda r, s: np.zeros((s, 1)), lk.GaussianRegression(1.0),
                                   Dataset(np.ones((3, 1)), np.full(3, 5.0)), loss=lambda z, y: (y - z) ** 2,
                                   num_draws=10, rng=rng)

    def test_exact_clipped_risk_matches_sampling(self, rng):
        ds = rk.gaussian_regression_data(rng, np.array([0.5, -0.5]), 30, 0.2)
        run = ol.run_online(lk.GaussianRegression(0.2), pr.IsoGaussian(1.0, 2), ds)
        exact = float(np.mean(rk.gibbs_clipped_risk_exact(run.posterior, ds.X, ds.y)))
        est = rk.gibbs_risk_estimate(run.posterior, lk.GaussianRegression(0.2), ds, num_draws=20000, rng=rng)
        assert abs(est.train - exact) <= 4 * est.train_se


class TestCoverage:
    def test_small_experiment(self, rng):
        res = rk.coverage_experiment(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 2), 50, num_replicates=10,
                                     rng=rng, num_test=5000)
        assert res.coverage == 1.0
        assert all(r["regret_bound"] >= r["kl_bound"] for r in res.records)
        lo, hi = res.confidence_interval
        assert lo <= res.coverage <= hi

    def test_spike_slab_records_sparse_payload(self, rng):
        res = rk.coverage_experiment(lk.GaussianRegression(1.0), pr.SpikeSlab(0.5, 1.0, 3), 30, num_replicates=3,
                                     rng=rng, theta_true=np.array([1.0, 0.0, 0.0]), num_test=2000)
        assert res.sparse_coverage is not None
        assert all("sparse_bound" in r for r in res.records)

    def test_non_conjugate_rejected(self, rng):
        with pytest.raises(DomainError):
            rk.coverage_experiment(lk.BinaryLogistic(), pr.IsoGaussian(1.0, 2), 10, rng=rng)
