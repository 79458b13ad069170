"""Prior families over the parameter vector.

Hierarchical priors over K sources (or classes) flatten the K x n parameter
array source-major: coordinate j of source k sits at index ``k*n + j``.
Under the integrated one- and two-level priors each coordinate's K-vector is
``N(0, Sigma)`` independently across coordinates, so the full covariance is
``kron(Sigma, I_n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .exceptions import DomainError

LOG_2PI = math.log(2.0 * math.pi)


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class IsoGaussian:
    variance: float
    dim: int

    def __post_init__(self):
        _positive("variance", self.variance)


@dataclass(frozen=True)
class MultivariateT:
    """Student t with ``df`` degrees of freedom and scale matrix ``scale * I``.

    Equivalent to ``theta | v ~ N(0, v I)`` with ``v ~ InvGamma(df/2, df*scale/2)``.
    """

    df: float
    scale: float
    dim: int

    def __post_init__(self):
        _positive("df", self.df)
        _positive("scale", self.scale)

    @property
    def mixing(self):
        """Inverse-gamma law of the mixing variance (shape df/2, scale df*scale/2)."""
        return stats.invgamma(a=self.df / 2.0, scale=self.df * self.scale / 2.0)


@dataclass(frozen=True)
class HierGaussOneLevel:
    """Shared Gaussian hypermean across ``num_sources`` sources.

    ``mu_j ~ N(0, hyper_variance)``, ``theta_j^(k) | mu_j ~ N(mu_j, variance)``.
    ``dim`` is the per-source dimension n; the parameter has ``num_sources * dim`` entries.
    """

    hyper_variance: float
    variance: float
    num_sources: int
    dim: int

    def __post_init__(self):
        if self.hyper_variance < 0:
            raise DomainError("hyper_variance must be nonnegative")
        _positive("variance", self.variance)
        if self.num_sources < 1:
            raise DomainError("num_sources must be >= 1")

    @property
    def total_dim(self):
        return self.num_sources * self.dim


@dataclass(frozen=True)
class HierGaussTwoLevel:
    """Global mean -> superclass means -> class parameters.

    ``superclass_of[k]`` is the 1-based superclass of class k+1.
    """

    top_variance: float
    superclass_variance: float
    class_variance: float
    superclass_of: tuple
    dim: int

    def __post_init__(self):
        if self.top_variance < 0 or self.superclass_variance < 0:
            raise DomainError("top and superclass variances must be nonnegative")
        _positive("class_variance", self.class_variance)
        sc = tuple(int(s) for s in self.superclass_of)
        object.__setattr__(self, "superclass_of", sc)
        if not sc:
            raise DomainError("superclass_of must be nonempty")
        S = max(sc)
        if min(sc) < 1 or set(sc) != set(range(1, S + 1)):
            raise DomainError("superclass_of must map onto {1, ..., S}")

    @property
    def num_sources(self):
        return len(self.superclass_of)

    @property
    def num_superclasses(self):
        return max(self.superclass_of)

    @property
    def total_dim(self):
        return self.num_sources * self.dim


@dataclass(frozen=True)
class SpikeSlab:
    """Each coordinate is 0 with probability ``p``, else ``N(0, slab_variance)``."""

    p: float
    slab_variance: float
    dim: int

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise DomainError("spike probability p must lie in (0, 1)")
        _positive("slab_variance", self.slab_variance)

    @classmethod
    def from_q(cls, q, slab_variance, dim):
        """Scale the spike probability with dimension: ``p = q**(1/dim)``."""
        if not 0.0 < q < 1.0:
            raise DomainError("q must lie in (0, 1)")
        return cls(q ** (1.0 / dim), slab_variance, dim)


@dataclass(frozen=True)
class Laplace:
    """Independent Laplace coordinates with density ``exp(-|t|/scale) / (2 scale)``."""

    scale: float
    dim: int

    def __post_init__(self):
        _positive("scale", self.scale)


PriorSpec = Union[IsoGaussian, MultivariateT, HierGaussOneLevel, HierGaussTwoLevel, SpikeSlab, Laplace]


def total_dim(prior) -> int:
    return getattr(prior, "total_dim", prior.dim)


class DerivedHierQuantities(NamedTuple):
    s2: float
    rho: float
    gamma2: float


def derived_quantities(hyper_variance, variance, num_sources) -> DerivedHierQuantities:
    """``s^2 = s0^2 + s^2``, the correlation ``rho`` and ``gamma^2 = K s0^2 + s^2``."""
    s2 = hyper_variance + variance
    return DerivedHierQuantities(s2, hyper_variance / s2, num_sources * hyper_variance + variance)


# -- covariance construction -------------------------------------------------


def one_level_cov(hyper_variance, variance, K):
    return hyper_variance * np.ones((K, K)) + variance * np.eye(K)


def one_level_precision(hyper_variance, variance, K):
    """Closed-form inverse of :func:`one_level_cov` (rank-one correction)."""
    gamma2 = K * hyper_variance + variance
    return -(hyper_variance / (variance * gamma2)) * np.ones((K, K)) + np.eye(K) / variance


def superclass_matrix(superclass_of):
    sc = np.asarray(superclass_of, dtype=int)
    P = np.zeros((sc.size, sc.max()))
    P[np.arange(sc.size), sc - 1] = 1.0
    return P


def two_level_cov(top_variance, superclass_variance, class_variance, superclass_of):
    """Return ``(Sigma_theta, Sigma_mu)`` for the two-level prior.

    ``Sigma_mu = s0^2 * ones(S, S) + s1^2 I`` and ``Sigma_theta = s2^2 I + P Sigma_mu P^T``.
    """
    P = superclass_matrix(superclass_of)
    S = P.shape[1]
    sigma_mu = top_variance * np.ones((S, S)) + superclass_variance * np.eye(S)
    sigma_theta = class_variance * np.eye(P.shape[0]) + P @ sigma_mu @ P.T
    return sigma_theta, sigma_mu


def source_covariance(prior):
    """K x K covariance shared by every coordinate of a hierarchical prior."""
    if isinstance(prior, HierGaussOneLevel):
        return one_level_cov(prior.hyper_variance, prior.variance, prior.num_sources)
    if isinstance(prior, HierGaussTwoLevel):
        return two_level_cov(prior.top_variance, prior.superclass_variance,
                             prior.class_variance, prior.superclass_of)[0]
    raise DomainError(f"{type(prior).__name__} is not a hierarchical Gaussian prior")


def gaussian_covariance(prior):
    """Full prior covariance for the jointly Gaussian families."""
    if isinstance(prior, IsoGaussian):
        return prior.variance * np.eye(prior.dim)
    if isinstance(prior, (HierGaussOneLevel, HierGaussTwoLevel)):
        return np.kron(source_covariance(prior), np.eye(prior.dim))
    raise DomainError(f"{type(prior).__name__} is not a Gaussian prior")


def is_gaussian(prior) -> bool:
    return isinstance(prior, (IsoGaussian, HierGaussOneLevel, HierGaussTwoLevel))


# -- densities ---------------------------------------------------------------


@dataclass(frozen=True)
class SpikeSlabDensity:
    """Per-coordinate decomposition of a spike-and-slab log density.

    ``atom[i]`` marks coordinates sitting on the point mass at zero; their
    ``log_mass`` is ``ln p``.  Other coordinates carry ``ln(1-p)`` plus the slab
    log density.  ``total`` is the log density with respect to the product of
    (counting at zero + Lebesgue) measures.
    """

    atom: np.ndarray
    log_mass: np.ndarray

    @property
    def total(self):
        return float(np.sum(self.log_mass, axis=-1)) if self.log_mass.ndim == 1 else np.sum(self.log_mass, axis=-1)


def _gaussian_logpdf_kron(theta, sigma_K, n):
    """Log density of N(0, kron(sigma_K, I_n)) at rows of ``theta`` (..., K*n)."""
    K = sigma_K.shape[0]
    L = np.linalg.cholesky(sigma_K)
    blocks = theta.reshape(theta.shape[:-1] + (K, n))
    cols = np.moveaxis(blocks, -2, -1).reshape(-1, K).T  # one K-vector per (row, coordinate)
    sol = solve_triangular(L, cols, lower=True)
    quad = np.sum(sol**2, axis=0).reshape(theta.shape[:-1] + (n,)).sum(axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (K * n * LOG_2PI + n * logdet + quad)


def log_density(prior, theta, location=0.0):
    """Log prior density at ``theta`` (shape (..., d)).

    For :class:`SpikeSlab` a :class:`SpikeSlabDensity` is returned.  ``location``
    shifts the multivariate t (and only it) and exists for testing.
    """
    theta = np.asarray(theta, dtype=float)
    d = total_dim(prior)
    if theta.shape[-1] != d:
        raise DomainError(f"expected a parameter of dimension {d}, got {theta.shape[-1]}")
    if isinstance(prior, IsoGaussian):
        return -0.5 * (d * (LOG_2PI + math.log(prior.variance)) + np.sum(theta**2, axis=-1) / prior.variance)
    if isinstance(prior, MultivariateT):
        nu, s2 = prior.df, prior.scale
        r2 = np.sum((theta - location) ** 2, axis=-1) / s2
        return (gammaln((nu + d) / 2.0) - gammaln(nu / 2.0) - 0.5 * d * math.log(math.pi * nu)
                - 0.5 * d * math.log(s2) - 0.5 * (nu + d) * np.log1p(r2 / nu))
    if isinstance(prior, (HierGaussOneLevel, HierGaussTwoLevel)):
        return _gaussian_logpdf_kron(theta, source_covariance(prior), prior.dim)
    if isinstance(prior, Laplace):
        b = prior.scale
        return -d * math.log(2.0 * b) - np.sum(np.abs(theta), axis=-1) / b
    if isinstance(prior, SpikeSlab):
        atom = theta == 0.0
        slab = -0.5 * (LOG_2PI + math.log(prior.slab_variance) + theta**2 / prior.slab_variance)
        log_mass = np.where(atom, math.log(prior.p), math.log1p(-prior.p) + slab)
        return SpikeSlabDensity(atom, log_mass)
    raise DomainError(f"unknown prior {prior!r}")


def log_density_total(prior, theta):
    """Scalar (or per-row) log density; spike-and-slab is taken w.r.t. the mixed measure."""
    out = log_density(prior, theta)
    return out.total if isinstance(out, SpikeSlabDensity) else out


# -- sampling ----------------------------------------------------------------


def sample(prior, rng, size=None):
    """Exact draws from the prior; returns (d,) or (size, d)."""
    single = size is None
    m = 1 if single else int(size)
    d = total_dim(prior)
    if isinstance(prior, IsoGaussian):
        out = math.sqrt(prior.variance) * rng.standard_normal((m, d))
    elif isinstance(prior, MultivariateT):
        v = prior.mixing.rvs(size=m, random_state=rng)
        out = np.sqrt(v)[:, None] * rng.standard_normal((m, d))
    elif isinstance(prior, (HierGaussOneLevel, HierGaussTwoLevel)):
        L = np.linalg.cholesky(source_covariance(prior))
        z = rng.standard_normal((m, prior.dim, L.shape[0]))
        draws = z @ L.T  # (m, n, K)
        out = np.moveaxis(draws, -1, -2).reshape(m, d)
    elif isinstance(prior, SpikeSlab):
        slab = math.sqrt(prior.slab_variance) * rng.standard_normal((m, d))
        zero = rng.random((m, d)) < prior.p
        out = np.where(zero, 0.0, slab)
    elif isinstance(prior, Laplace):
        out = rng.laplace(0.0, prior.scale, size=(m, d))
    else:
        raise DomainError(f"unknown prior {prior!r}")
    return out[0] if single else out


def sample_ancestral(prior, rng, size):
    """Draw hierarchical Gaussians level by level instead of from the integrated covariance."""
    m, n = int(size), prior.dim
    if isinstance(prior, HierGaussOneLevel):
        mu = math.sqrt(prior.hyper_variance) * rng.standard_normal((m, 1, n))
        theta = mu + math.sqrt(prior.variance) * rng.standard_normal((m, prior.num_sources, n))
        return theta.reshape(m, -1)
    if isinstance(prior, HierGaussTwoLevel):
        S = prior.num_superclasses
        beta = math.sqrt(prior.top_variance) * rng.standard_normal((m, 1, n))
        mu = beta + math.sqrt(prior.superclass_variance) * rng.standard_normal((m, S, n))
        idx = np.asarray(prior.superclass_of) - 1
        theta = mu[:, idx, :] + math.sqrt(prior.class_variance) * rng.standard_normal((m, prior.num_sources, n))
        return theta.reshape(m, -1)
    raise DomainError("ancestral sampling is defined for hierarchical Gaussian priors")


# -- spike-and-slab support size ---------------------------------------------


def spike_slab_support_pmf(n, q, k):
    """Probability of exactly ``k`` nonzero coordinates when ``p = q**(1/n)``."""
    if not 0.0 < q < 1.0:
        raise DomainError("q must lie in (0, 1)")
    if not 0 <= k <= n:
        raise DomainError("k must satisfy 0 <= k <= n")
    if k == 0:
        return q ** ((n - k) / n)
    log_one_minus_p = math.log(-math.expm1(math.log(q) / n))
    log_pmf = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
               + (n - k) / n * math.log(q) + k * log_one_minus_p)
    return math.exp(log_pmf)


def spike_slab_support_pmf_vector(n, q):
    return np.array([spike_slab_support_pmf(n, q, k) for k in range(n + 1)])


def poisson_limit_pmf(q, k):
    """Large-n limit ``q ln(1/q)^k / k!`` of the support-size distribution."""
    return float(stats.poisson.pmf(k, -math.log(q)))


def support_tv_distance(n, q):
    """Total-variation distance between the support-size law and its Poisson limit."""
    pmf = spike_slab_support_pmf_vector(n, q)
    ks = np.arange(n + 1)
    pois = stats.poisson.pmf(ks, -math.log(q))
    tail = stats.poisson.sf(n, -math.log(q))  # Poisson mass beyond n
    return 0.5 * (float(np.sum(np.abs(pmf - pois))) + float(tail))
