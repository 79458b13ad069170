import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierregret import likelihoods as lk
from hierregret.exceptions import DomainError

FAMILIES = [lk.GaussianRegression(0.7), lk.BinaryLogistic(), lk.MultiClassLogistic(4)]


def _random_point(spec, rng):
    if isinstance(spec, lk.MultiClassLogistic):
        return rng.normal(0, 3, spec.num_classes), float(rng.integers(1, spec.num_classes + 1))
    if isinstance(spec, lk.BinaryLogistic):
        return rng.normal(0, 3), float(rng.choice([-1.0, 1.0]))
    return rng.normal(0, 3), rng.normal(0, 2)


class TestLosses:
    def test_gaussian_matches_scipy(self):
        from scipy import stats
        spec = lk.GaussianRegression(2.5)
        z, y = np.array([0.1, -1.0, 3.0]), np.array([0.0, 0.5, 2.0])
        np.testing.assert_allclose(lk.neg_log_loss(spec, z, y), -stats.norm.logpdf(y, z, math.sqrt(2.5)))

    def test_binary_convention(self):
        spec = lk.BinaryLogistic()
        # p(y | z) = 1 / (1 + exp(y z))
        np.testing.assert_allclose(lk.neg_log_loss(spec, 2.0, 1.0), math.log1p(math.exp(2.0)))
        np.testing.assert_allclose(lk.neg_log_loss(spec, 2.0, -1.0), math.log1p(math.exp(-2.0)))
        probs = lk.predictive_probabilities(spec, np.array([2.0]))
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0)
        np.testing.assert_allclose(probs[0, 1], 1.0 / (1.0 + math.exp(2.0)))

    def test_binary_is_stable_at_extremes(self):
        spec = lk.BinaryLogistic()
        np.testing.assert_allclose(lk.neg_log_loss(spec, 800.0, 1.0), 800.0)
        assert lk.neg_log_loss(spec, -800.0, 1.0) == 0.0

    def test_multiclass_matches_softmax(self):
        spec = lk.MultiClassLogistic(3)
        z = np.array([0.3, -1.2, 2.0])
        p = np.exp(z) / np.exp(z).sum()
        for k in (1, 2, 3):
            np.testing.assert_allclose(lk.neg_log_loss(spec, z, k), -math.log(p[k - 1]))

    def test_multiclass_shift_invariance(self):
        spec = lk.MultiClassLogistic(3)
        z = np.array([0.3, -1.2, 2.0])
        np.testing.assert_allclose(lk.neg_log_loss(spec, z + 50.0, 2), lk.neg_log_loss(spec, z, 2))

    @pytest.mark.parametrize("spec,bad", [(lk.BinaryLogistic(), 0.0), (lk.MultiClassLogistic(3), 4.0),
                                          (lk.MultiClassLogistic(3), 1.5)])
    def test_bad_labels(self, spec, bad):
        z = np.zeros(3) if isinstance(spec, lk.MultiClassLogistic) else 0.0
        with pytest.raises(DomainError):
            lk.neg_log_loss(spec, z, bad)

    def test_constructor_domains(self):
        with pytest.raises(DomainError):
            lk.GaussianRegression(0.0)
        with pytest.raises(DomainError):
            lk.MultiClassLogistic(1)


class TestDerivatives:
    @pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: type(s).__name__)
    def test_gradient_matches_central_differences(self, spec, rng):
        h = 1e-6
        for _ in range(25):
            z, y = _random_point(spec, rng)
            g = np.atleast_1d(lk.grad_neg_log_loss(spec, z, y))
            zz = np.atleast_1d(np.asarray(z, dtype=float))
            fd = np.empty_like(zz)
            for i in range(zz.size):
                e = np.zeros_like(zz)
                e[i] = h
                f = lambda v: float(lk.neg_log_loss(spec, v if zz.size > 1 else v[0], y))  # noqa: E731
                fd[i] = (f(zz + e) - f(zz - e)) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: type(s).__name__)
    def test_hessian_matches_fd(self, spec, rng):
        for _ in range(10):
            z, y = _random_point(spec, rng)
            H = np.atleast_2d(lk.hess_neg_log_loss(spec, z, y))
            np.testing.assert_allclose(H, lk.fd_hessian(spec, z, y), atol=2e-6)

    def test_smoothness_constants(self):
        assert lk.smoothness_constant(lk.GaussianRegression(0.25)) == 4.0
        assert lk.smoothness_constant(lk.BinaryLogistic()) == 0.5
        assert lk.smoothness_constant(lk.MultiClassLogistic(5)) == 0.5

    def test_gaussian_probe_is_exact_analytically(self):
        spec = lk.GaussianRegression(1.0)
        assert lk.hessian_norm_probe(spec, np.linspace(-5, 5, 11), method="analytic") == 1.0
        np.testing.assert_allclose(lk.hessian_norm_probe(spec, np.linspace(-5, 5, 11)), 1.0, atol=1e-6)

    def test_binary_probe_peaks_at_quarter(self):
        val = lk.hessian_norm_probe(lk.BinaryLogistic(), np.linspace(-4, 4, 81), method="analytic")
        np.testing.assert_allclose(val, 0.25)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=6))
    def test_mlr_hessian_norm_at_most_half(self, z):
        spec = lk.MultiClassLogistic(len(z))
        H = lk.hess_neg_log_loss(spec, np.array(z))
        assert np.linalg.norm(H, 2) <= 0.5 + 1e-12
        np.testing.assert_allclose(H.sum(axis=1), 0.0, atol=1e-12)


class TestLinearValues:
    def test_glm_and_mlr_shapes(self, rng):
        X = rng.normal(size=(7, 3))
        assert lk.linear_values(lk.BinaryLogistic(), rng.normal(size=3), X).shape == (7,)
        assert lk.linear_values(lk.BinaryLogistic(), rng.normal(size=(5, 3)), X).shape == (5, 7)
        spec = lk.MultiClassLogistic(4)
        theta = rng.normal(size=12)
        Z = lk.linear_values(spec, theta, X)
        assert Z.shape == (7, 4)
        np.testing.assert_allclose(Z, X @ theta.reshape(4, 3).T)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            lk.linear_values(lk.MultiClassLogistic(2), np.zeros(5), np.zeros((1, 3)))
