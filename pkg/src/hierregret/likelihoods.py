"""GLM and multi-class logistic likelihoods.

Every family is described through its per-observation loss
``f_y(z) = -ln p(y | z)`` where ``z`` is the linear value ``theta . x``
(a scalar for GLMs, a K-vector of class scores for multi-class logistic
regression).  Binary labels are ``{-1, +1}`` with ``p(y | z) = 1 / (1 + exp(y z))``;
class labels are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax

from .exceptions import DomainError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianRegression:
    noise_variance: float = 1.0

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise DomainError("noise_variance must be positive")


@dataclass(frozen=True)
class BinaryLogistic:
    pass


@dataclass(frozen=True)
class MultiClassLogistic:
    num_classes: int

    def __post_init__(self):
        if int(self.num_classes) != self.num_classes or self.num_classes < 2:
            raise DomainError("MultiClassLogistic needs an integer num_classes >= 2")


LikelihoodSpec = Union[GaussianRegression, BinaryLogistic, MultiClassLogistic]


def is_classification(spec) -> bool:
    return isinstance(spec, (BinaryLogistic, MultiClassLogistic))


def _check_labels(spec, y):
    y = np.asarray(y, dtype=float)
    if isinstance(spec, BinaryLogistic):
        if not np.all((y == 1.0) | (y == -1.0)):
            raise DomainError("binary logistic labels must be -1 or +1")
    elif isinstance(spec, MultiClassLogistic):
        if not np.all((y == np.round(y)) & (y >= 1) & (y <= spec.num_classes)):
            raise DomainError(f"class labels must be integers in 1..{spec.num_classes}")
    return y


def neg_log_loss(spec, z, y):
    """``-ln p(y | z)``, vectorised over leading axes of ``z`` and ``y``.

    For :class:`MultiClassLogistic`, ``z`` has a trailing axis of length K.
    """
    y = _check_labels(spec, y)
    z = np.asarray(z, dtype=float)
    if isinstance(spec, GaussianRegression):
        s2 = spec.noise_variance
        return 0.5 * (LOG_2PI + math.log(s2)) + (y - z) ** 2 / (2.0 * s2)
    if isinstance(spec, BinaryLogistic):
        return np.logaddexp(0.0, y * z)
    if isinstance(spec, MultiClassLogistic):
        if z.shape[-1] != spec.num_classes:
            raise DomainError(f"expected {spec.num_classes} class scores, got {z.shape[-1]}")
        idx = (y.astype(int) - 1)
        zy = np.take_along_axis(z, np.broadcast_to(idx, z.shape[:-1])[..., None], axis=-1)[..., 0]
        return logsumexp(z, axis=-1) - zy
    raise DomainError(f"unknown likelihood {spec!r}")


def log_likelihood(spec, z, y):
    return -neg_log_loss(spec, z, y)


def grad_neg_log_loss(spec, z, y):
    """Derivative of ``f_y`` in its linear argument (gradient over classes for MLR)."""
    y = _check_labels(spec, y)
    z = np.asarray(z, dtype=float)
    if isinstance(spec, GaussianRegression):
        return (z - y) / spec.noise_variance
    if isinstance(spec, BinaryLogistic):
        return y * expit(y * z)
    if isinstance(spec, MultiClassLogistic):
        p = softmax(z, axis=-1)
        onehot = np.zeros_like(p)
        idx = np.broadcast_to(y.astype(int) - 1, z.shape[:-1])[..., None]
        np.put_along_axis(onehot, idx, 1.0, axis=-1)
        return p - onehot
    raise DomainError(f"unknown likelihood {spec!r}")


def hess_neg_log_loss(spec, z, y=None):
    """Second derivative of ``f_y``; for MLR the K x K matrix ``diag(p) - p p^T``.

    None of the three families has a label-dependent curvature, so ``y`` is
    accepted only for symmetry with the other functions.
    """
    z = np.asarray(z, dtype=float)
    if isinstance(spec, GaussianRegression):
        return np.full(z.shape, 1.0 / spec.noise_variance)
    if isinstance(spec, BinaryLogistic):
        s = expit(z)
        return s * (1.0 - s)
    if isinstance(spec, MultiClassLogistic):
        p = softmax(z, axis=-1)
        return p[..., :, None] * np.eye(spec.num_classes) - p[..., :, None] * p[..., None, :]
    raise DomainError(f"unknown likelihood {spec!r}")


def smoothness_constant(spec) -> float:
    """The curvature constant c with ``||f_y''(z)|| <= c`` for all y, z.

    Logistic regression uses 1/2 even though 1/4 is tight for the binary case.
    """
    if isinstance(spec, GaussianRegression):
        return 1.0 / spec.noise_variance
    if isinstance(spec, (BinaryLogistic, MultiClassLogistic)):
        return 0.5
    raise DomainError(f"unknown likelihood {spec!r}")


def _labels(spec):
    if isinstance(spec, BinaryLogistic):
        return [-1.0, 1.0]
    if isinstance(spec, MultiClassLogistic):
        return [float(k) for k in range(1, spec.num_classes + 1)]
    return [0.0]


def fd_hessian(spec, z, y, h=1e-4):
    """Central finite-difference Hessian of ``f_y`` at a single point ``z``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    scalar = not isinstance(spec, MultiClassLogistic)

    def f(v):
        return float(neg_log_loss(spec, v[0] if scalar else v, y))

    d = z.size
    H = np.empty((d, d))
    f0 = f(z)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (f(z + ei) - 2.0 * f0 + f(z - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = H[j, i] = (
                f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej) + f(z - ei - ej)
            ) / (4.0 * h**2)
    return H


def hessian_norm_probe(spec, z_grid, method="fd", h=1e-4) -> float:
    """Largest spectral norm of ``f_y''`` over a grid of linear values and all labels.

    ``method="fd"`` differentiates the loss numerically and so is an
    independent witness of the smoothness constant; ``method="analytic"`` uses
    the closed-form Hessian.  For continuous responses the label is irrelevant
    to the curvature and 0 is used.
    """
    z_grid = [np.asarray(z, dtype=float) for z in z_grid]
    if not z_grid:
        raise DomainError("z_grid must be nonempty")
    best = 0.0
    for z in z_grid:
        for y in _labels(spec):
            if method == "fd":
                H = fd_hessian(spec, z, y, h=h)
            elif method == "analytic":
                H = np.atleast_2d(hess_neg_log_loss(spec, z, y))
            else:
                raise DomainError(f"unknown method {method!r}")
            best = max(best, float(np.linalg.norm(H, 2)))
    return best


def predictive_probabilities(spec, z):
    """Class probabilities at linear value(s) ``z``.

    Binary: columns ordered as labels (-1, +1).  MLR: columns are classes 1..K.
    """
    z = np.asarray(z, dtype=float)
    if isinstance(spec, BinaryLogistic):
        # p(+1 | z) = 1 / (1 + e^{z}) = expit(-z)
        return np.stack([expit(z), expit(-z)], axis=-1)
    if isinstance(spec, MultiClassLogistic):
        return np.exp(log_softmax(z, axis=-1))
    raise DomainError("class probabilities only exist for classification likelihoods")


def linear_values(spec, theta, X):
    """Linear values for parameters ``theta`` (..., d) and features ``X`` (T, n).

    GLMs return (..., T); MLR reshapes ``theta`` to (..., K, n) and returns (..., T, K).
    """
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    if isinstance(spec, MultiClassLogistic):
        K = spec.num_classes
        n = X.shape[-1]
        if theta.shape[-1] != K * n:
            raise DomainError(f"MLR parameter must have K*n = {K * n} entries, got {theta.shape[-1]}")
        W = theta.reshape(theta.shape[:-1] + (K, n))
        return np.einsum("...kn,tn->...tk", W, X)
    if theta.shape[-1] != X.shape[-1]:
        raise DomainError(f"parameter dimension {theta.shape[-1]} != feature dimension {X.shape[-1]}")
    return theta @ X.T


def parameter_dim(spec, n):
    return spec.num_classes * n if isinstance(spec, MultiClassLogistic) else n
