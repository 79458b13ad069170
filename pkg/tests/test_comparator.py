import math

import numpy as np
import pytest

from hierregret import likelihoods as lk
from hierregret import online as ol
from hierregret import priors as pr
from hierregret.comparator import DEFAULT_RADIUS, erm, measured_regret, sparse_comparator
from hierregret.data import Dataset, Example
from hierregret.exceptions import DomainError
from hierregret.risk import unit_ball_features


class TestErm:
    def test_gaussian_matches_lstsq(self, rng):
        X = unit_ball_features(rng, 40, 4)
        y = rng.normal(size=40)
        res = erm(lk.GaussianRegression(0.3), Dataset(X, y))
        np.testing.assert_allclose(res.theta_hat, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-8)
        assert res.diagnostics["converged"] and not res.diagnostics["capped"]

    def test_single_logistic_example_on_unit_ball(self):
        res = erm(lk.BinaryLogistic(), [Example(np.array([1.0]), 1.0)], constraint=1.0)
        np.testing.assert_allclose(res.theta_hat, [-1.0], atol=1e-10)
        scan = np.linspace(-1, 1, 2001)
        losses = lk.neg_log_loss(lk.BinaryLogistic(), scan, 1.0)
        np.testing.assert_allclose(res.loss, losses.min(), atol=1e-12)
        np.testing.assert_allclose(res.diagnostics["multiplier"], 1 / (1 + math.e), rtol=1e-6)

    def test_symmetric_data(self):
        data = [Example(np.array([0.5, 0.5]), 1.0), Example(np.array([0.5, 0.5]), -1.0)]
        np.testing.assert_allclose(erm(lk.BinaryLogistic(), data).theta_hat, 0.0, atol=1e-10)

    def test_separable_data_is_capped(self):
        X = np.array([[1.0], [0.5], [-0.7]])
        y = np.array([-1.0, -1.0, 1.0])
        res = erm(lk.BinaryLogistic(), Dataset(X, y))
        assert res.diagnostics["capped"]
        np.testing.assert_allclose(np.linalg.norm(res.theta_hat), DEFAULT_RADIUS)
        assert res.constraint == DEFAULT_RADIUS

    def test_separable_cap_matches_angle_scan(self):
        X = np.array([[0.9, 0.2], [0.5, -0.3], [-0.7, 0.1]])
        y = np.array([-1.0, -1.0, 1.0])
        res = erm(lk.BinaryLogistic(), Dataset(X, y))
        ang = np.linspace(0, 2 * np.pi, 200_001)
        ring = DEFAULT_RADIUS * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        losses = np.logaddexp(0.0, (ring @ X.T) * y).sum(axis=1)
        assert res.diagnostics["capped"]
        np.testing.assert_allclose(res.loss, losses.min(), rtol=1e-6)
        np.testing.assert_allclose(res.theta_hat, ring[losses.argmin()], atol=1e-2)

    def test_multiclass_gradient_vanishes(self, rng):
        X = unit_ball_features(rng, 60, 2)
        y = rng.integers(1, 4, size=60).astype(float)
        spec = lk.MultiClassLogistic(3)
        res = erm(spec, Dataset(X, y))
        assert res.diagnostics["grad_norm"] <= 1e-8 or res.diagnostics["capped"]

    def test_empty_data(self):
        with pytest.raises(DomainError):
            erm(lk.GaussianRegression(1.0), [])


class TestSparse:
    def test_full_support_equals_erm(self, rng):
        X = unit_ball_features(rng, 30, 3)
        ds = Dataset(X, rng.normal(size=30))
        a = sparse_comparator(lk.GaussianRegression(1.0), ds, 3)
        b = erm(lk.GaussianRegression(1.0), ds)
        np.testing.assert_allclose(a.theta_hat, b.theta_hat, atol=1e-8)

    def test_zero_support(self, rng):
        X = unit_ball_features(rng, 10, 2)
        y = rng.normal(size=10)
        res = sparse_comparator(lk.GaussianRegression(1.0), Dataset(X, y), 0)
        np.testing.assert_array_equal(res.theta_hat, 0.0)
        np.testing.assert_allclose(res.loss, np.sum(lk.neg_log_loss(lk.GaussianRegression(1.0), 0.0, y)))

    def test_recovers_support(self, rng):
        theta = np.array([2.0, 0.0, 0.0, -1.5, 0.0])
        X = unit_ball_features(rng, 300, 5)
        ds = Dataset(X, X @ theta + 0.1 * rng.normal(size=300))
        res = sparse_comparator(lk.GaussianRegression(0.01), ds, 2)
        assert res.support == (0, 3)

    def test_dimension_cap(self, rng):
        with pytest.raises(DomainError):
            sparse_comparator(lk.GaussianRegression(1.0), Dataset(np.zeros((2, 16)), np.zeros(2)), 1)


class TestMeasuredRegret:
    def test_empty(self):
        run = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 1), [])
        assert measured_regret(run, None) == 0.0

    def test_definition(self, rng):
        X = unit_ball_features(rng, 20, 2)
        ds = Dataset(X, rng.normal(size=20))
        run = ol.run_online(lk.GaussianRegression(1.0), pr.IsoGaussian(1.0, 2), ds)
        comp = erm(lk.GaussianRegression(1.0), ds)
        np.testing.assert_allclose(measured_regret(run, comp), run.cumulative_loss - comp.loss)
