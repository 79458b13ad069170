"""Closed-form KL divergences, KL upper bounds, and a Monte-Carlo KL oracle.

All divergences are in nats and written ``KL(first || second)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import erf, gammaln

from .exceptions import DomainError

PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class KlResult:
    value: float
    kind: str  # "exact" | "upper_bound" | "monte_carlo"
    standard_error: Optional[float] = None
    excluded: int = 0

    def __float__(self):
        return float(self.value)


def _as_cov(S, n):
    S = np.asarray(S, dtype=float)
    if S.ndim == 0:
        S = float(S) * np.eye(n)
    return S


def pd_cholesky(S):
    """Cholesky factor of a symmetric positive definite matrix.

    Raises :class:`DomainError` if factorization fails or the smallest pivot is
    below ``1e-12`` times the largest.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12):
        raise DomainError("covariance matrix is not symmetric")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise DomainError("covariance matrix is not positive definite") from exc
    piv = np.diag(L) ** 2
    if piv.min() <= PIVOT_RTOL * piv.max():
        raise DomainError("covariance matrix is numerically singular")
    return L


def _logdet(L):
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def _gaussian_pieces(mu1, S1, mu2, S2):
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    n = mu1.size
    if mu2.size != n:
        raise DomainError("means must have the same dimension")
    S1, S2 = _as_cov(S1, n), _as_cov(S2, n)
    if S1.shape != (n, n) or S2.shape != (n, n):
        raise DomainError("covariance dimensions do not match the means")
    L1, L2 = pd_cholesky(S1), pd_cholesky(S2)
    A = np.linalg.solve(L2, L1)
    trace = float(np.sum(A**2))  # tr(S2^{-1} S1)
    w = np.linalg.solve(L2, mu1 - mu2)
    maha = float(w @ w)  # (mu1-mu2)^T S2^{-1} (mu1-mu2)
    return n, _logdet(L1), _logdet(L2), trace, maha


def kl_gaussian_gaussian(mu1, S1, mu2, S2) -> KlResult:
    n, ld1, ld2, tr, maha = _gaussian_pieces(mu1, S1, mu2, S2)
    value = 0.5 * (ld2 - ld1 - n + tr + maha)
    return KlResult(max(value, 0.0) if abs(value) < 1e-14 else value, "exact")


def _log_descending_factorial(y, m):
    """``ln(y (y-1) ... (y-m+1))`` computed through log-gamma."""
    if m == 0:
        return 0.0
    return float(gammaln(y + 1.0) - gammaln(y - m + 1.0))


def log_lambda_nu_k(nu, k):
    """Log of the two-branch constant ``Lambda_{nu,k}`` with falling factorials from ``(nu+k)/2``.

    Even k: ``nu^{k/2} / ((nu+k)/2)^{(k/2) falling}``; odd k:
    ``(nu+1)^{1/2} nu^{(k-1)/2} / ((nu/2)^{1/2} ((nu+k)/2)^{((k-1)/2) falling})``.

    Note the falling factorials start at ``(nu+k)/2`` rather than
    ``(nu+k)/2 - 1``, so for k >= 2 this understates
    ``Gamma(nu/2) nu^{k/2} / Gamma((nu+k)/2)``; see :func:`log_gamma_ratio_bound`.
    """
    if not nu > 0 or int(k) != k or k < 1:
        raise DomainError("need nu > 0 and integer k >= 1")
    y = (nu + k) / 2.0
    if k % 2 == 0:
        return 0.5 * k * math.log(nu) - _log_descending_factorial(y, k // 2)
    return (0.5 * math.log(nu + 1.0) + 0.5 * (k - 1) * math.log(nu)
            - 0.5 * math.log(nu / 2.0) - _log_descending_factorial(y, (k - 1) // 2))


def lambda_nu_k(nu, k):
    return math.exp(log_lambda_nu_k(nu, k))


def log_gamma_ratio(nu, k):
    """``ln[Gamma(nu/2) nu^{k/2} / Gamma((nu+k)/2)]`` evaluated directly."""
    return float(gammaln(nu / 2.0) + 0.5 * k * math.log(nu) - gammaln((nu + k) / 2.0))


def log_gamma_ratio_bound(nu, k):
    """Valid upper bound on :func:`log_gamma_ratio` with the same two-branch shape.

    Exact for even k (falling factorial from ``(nu+k)/2 - 1``); for odd k the
    half-integer step uses ``Gamma(a)/Gamma(a+1/2) <= sqrt((2a+1)/(2a^2))`` at
    ``a = nu/2``.
    """
    if not nu > 0 or int(k) != k or k < 1:
        raise DomainError("need nu > 0 and integer k >= 1")
    y = (nu + k) / 2.0 - 1.0
    if k % 2 == 0:
        return 0.5 * k * math.log(nu) - _log_descending_factorial(y, k // 2)
    return (0.5 * math.log(nu + 1.0) + 0.5 * (k - 1) * math.log(nu)
            - 0.5 * math.log(nu / 2.0) - _log_descending_factorial(y, (k - 1) // 2))


def kl_gaussian_t_upper(mu1, S1, mu2, S2, nu, constant="valid") -> KlResult:
    """Upper bound on ``KL(N(mu1, S1) || t_nu(mu2, S2))``.

    ``ln L + 1/2 ln|S2|/|S1| - (k/2) ln 2e + (nu+k)/(2 nu) tr(S2^-1 S1)
    + (nu+k)/2 ln(1 + (mu1-mu2)^T S2^-1 (mu1-mu2) / nu)``.

    ``constant="valid"`` takes ``ln L`` from :func:`log_gamma_ratio_bound`;
    ``constant="short_factorial"`` uses :func:`log_lambda_nu_k`, which is not a bound
    for dimension >= 2 (it can fall below the true KL when S1 is small).
    """
    if not nu > 0:
        raise DomainError("nu must be positive")
    k, ld1, ld2, tr, maha = _gaussian_pieces(mu1, S1, mu2, S2)
    if constant == "valid":
        log_lam = log_gamma_ratio_bound(nu, k)
    elif constant == "short_factorial":
        log_lam = log_lambda_nu_k(nu, k)
    else:
        raise DomainError(f"unknown constant {constant!r}")
    value = (log_lam + 0.5 * (ld2 - ld1) - 0.5 * k * math.log(2.0 * math.e)
             + (nu + k) / (2.0 * nu) * tr + 0.5 * (nu + k) * math.log1p(maha / nu))
    return KlResult(value, "upper_bound")


def kl_gaussian_laplace_exact(mu, var, beta) -> KlResult:
    """``KL(N(mu, var) || Laplace(0, beta))`` in closed form via ``E|x|``."""
    if not (var > 0 and beta > 0):
        raise DomainError("var and beta must be positive")
    s = math.sqrt(var)
    mean_abs = mu * math.erf(mu / (math.sqrt(2.0) * s)) + math.sqrt(2.0 / math.pi) * s * math.exp(-mu**2 / (2.0 * var))
    value = math.log(2.0 * beta) + mean_abs / beta - 0.5 * math.log(2.0 * math.pi * math.e * var)
    return KlResult(value, "exact")


def kl_gaussian_laplace_upper(mu, var, beta, half_mean_term=False) -> KlResult:
    """Erf-free upper bound on ``KL(N(mu, var) || Laplace(0, beta))``.

    Uses ``|erf(x)| <= sqrt(1 - exp(-4 x^2 / pi))``.  The default weights the
    ``|mu|`` term by ``1/beta`` as ``E|x|/beta`` requires; ``half_mean_term=True``
    uses the ``1/(2 beta)`` weighting, which undercuts the exact KL once
    ``|mu|`` is comparable to ``sqrt(var)``.
    """
    if not (var > 0 and beta > 0):
        raise DomainError("var and beta must be positive")
    s = math.sqrt(var)
    mean_coef = 1.0 / (2.0 * beta) if half_mean_term else 1.0 / beta
    value = (0.5 * math.log(2.0 * beta**2 / var)
             + mean_coef * abs(mu) * math.sqrt(-math.expm1(-2.0 * mu**2 / (math.pi * var)))
             + (1.0 / (2.0 * beta)) * (2.0 * math.sqrt(2.0) * s / math.sqrt(math.pi)) * math.exp(-mu**2 / (2.0 * var))
             - 0.5 * math.log(math.pi * math.e))
    return KlResult(value, "upper_bound")


def kl_gaussian_laplace_quadrature(mu, var, beta, tol=1e-10) -> KlResult:
    """Adaptive-quadrature oracle for ``KL(N(mu, var) || Laplace(0, beta))``."""
    s = math.sqrt(var)
    log_norm = -0.5 * math.log(2.0 * math.pi * var)

    def integrand(x):
        lq = log_norm - (x - mu) ** 2 / (2.0 * var)
        lp = -math.log(2.0 * beta) - abs(x) / beta
        return math.exp(lq) * (lq - lp)

    lo, hi = mu - 40.0 * s, mu + 40.0 * s
    pts = [0.0] if lo < 0.0 < hi else None
    val, err = integrate.quad(integrand, lo, hi, points=pts, epsabs=tol, epsrel=1e-12, limit=500)
    return KlResult(val, "exact", standard_error=err)


def kl_monte_carlo(sample_from_q: Callable, log_q: Callable, log_p: Callable,
                   num_samples: int, rng) -> KlResult:
    """Mean and standard error of ``log q - log p`` over draws from ``q``.

    ``sample_from_q(rng, size)`` returns an array of draws; the log densities
    are vectorised over the leading axis.  Draws with a non-finite log ratio
    are excluded and counted.
    """
    if num_samples < 1000:
        raise DomainError("num_samples must be at least 1000")
    draws = sample_from_q(rng, num_samples)
    ratio = np.asarray(log_q(draws), dtype=float) - np.asarray(log_p(draws), dtype=float)
    ok = np.isfinite(ratio)
    excluded = int(ratio.size - ok.sum())
    r = ratio[ok]
    return KlResult(float(r.mean()), "monte_carlo", float(r.std(ddof=1) / math.sqrt(r.size)), excluded)


def gaussian_log_pdf(mu, S):
    """Vectorised log density of ``N(mu, S)`` (helper for the MC oracle)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = mu.size
    L = pd_cholesky(_as_cov(S, n))
    ld = _logdet(L)

    def logpdf(x):
        x = np.asarray(x, dtype=float).reshape(-1, n)
        w = np.linalg.solve(L, (x - mu).T)
        return -0.5 * (n * math.log(2.0 * math.pi) + ld + np.sum(w**2, axis=0))

    return logpdf


def gaussian_sampler(mu, S):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    L = pd_cholesky(_as_cov(S, mu.size))

    def draw(rng, size):
        return mu + rng.standard_normal((size, mu.size)) @ L.T

    return draw


def t_log_pdf(mu, S, nu):
    """Vectorised log density of the multivariate t with location ``mu`` and scale ``S``."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    k = mu.size
    L = pd_cholesky(_as_cov(S, k))
    ld = _logdet(L)
    const = gammaln((nu + k) / 2.0) - gammaln(nu / 2.0) - 0.5 * k * math.log(nu * math.pi) - 0.5 * ld

    def logpdf(x):
        x = np.asarray(x, dtype=float).reshape(-1, k)
        w = np.linalg.solve(L, (x - mu).T)
        return const - 0.5 * (nu + k) * np.log1p(np.sum(w**2, axis=0) / nu)

    return logpdf


def laplace_log_pdf(beta):
    def logpdf(x):
        x = np.asarray(x, dtype=float)
        return -math.log(2.0 * beta) - np.abs(x).reshape(x.shape[0], -1).sum(axis=1) / beta

    return logpdf
