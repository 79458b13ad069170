"""Regret-bound evaluators, their pre-optimisation objectives, and the
hierarchical-versus-flat comparison.

Every bound is returned as a :class:`BoundReport` whose ``total`` is the sum of
its named ``terms``.  Where a bound comes from minimising the meta-bound
``(T c / 2) ||Var_Q|| + KL(Q || P0)`` over an isotropic Gaussian ``Q`` with
variance ``phi^2``, the minimiser is recorded in ``variational_params`` and the
matching ``*_objective`` function evaluates the expression before
minimisation, so the choice can be checked for stationarity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .exceptions import DomainError
from .priors import derived_quantities, one_level_cov, two_level_cov

# 3 ln(4/3) = 0.86305 is replaced by this slightly smaller constant in the
# specialised two-source condition.
SPECIALISED_CONSTANT = 0.863


@dataclass(frozen=True)
class BoundReport:
    total: float
    terms: dict
    variational_params: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "total": self.total,
            "terms": dict(self.terms),
            "variational_params": _jsonable(self.variational_params),
            "inputs": _jsonable(self.inputs),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _report(terms, variational=None, inputs=None):
    terms = {k: float(v) for k, v in terms.items()}
    return BoundReport(math.fsum(terms.values()), terms, variational or {}, inputs or {})


def _check_common(T, c):
    if T < 0:
        raise DomainError("T must be nonnegative")
    if not c > 0:
        raise DomainError("c must be positive")


def _vec(theta):
    return np.atleast_1d(np.asarray(theta, dtype=float)).ravel()


def _sources(theta, K=None):
    th = np.asarray(theta, dtype=float)
    if th.ndim == 1 and K is not None:
        th = th.reshape(K, -1)
    if th.ndim != 2:
        raise DomainError("per-source parameters must be a K x n array")
    if K is not None and th.shape[0] != K:
        raise DomainError(f"expected {K} source parameters, got {th.shape[0]}")
    return th


def _pairwise_sq(th):
    """``sum_{k<l} ||th_k - th_l||^2``."""
    K = th.shape[0]
    direct = 0.0
    for k in range(K):
        for ell in range(k + 1, K):
            direct += float(np.sum((th[k] - th[ell]) ** 2))
    return direct


# -- meta-bound ----------------------------------------------------------------


def meta_bound(T, c, spectral_var, kl, multiplicity=1):
    """``(T c m / 2) ||Var_Q|| + KL(Q || P0)`` with ``m = n' + n''`` (1 for GLMs)."""
    _check_common(T, c)
    if spectral_var < 0 or kl < 0:
        raise DomainError("spectral_var and kl must be nonnegative")
    return 0.5 * T * c * multiplicity * spectral_var + kl


def _iso_gauss_kl(phi2, sigma2, dim, sq_norm):
    """KL(N(theta, phi2 I_d) || N(0, sigma2 I_d))."""
    return 0.5 * (dim * math.log(sigma2 / phi2) - dim + dim * phi2 / sigma2 + sq_norm / sigma2)


# -- isotropic Gaussian prior ----------------------------------------------------


def gaussian_phi2(T, c, sigma2, n):
    return n * sigma2 / (n + T * c * sigma2)


def gaussian_objective(phi2, theta, T, c, sigma2):
    th = _vec(theta)
    return meta_bound(T, c, phi2, _iso_gauss_kl(phi2, sigma2, th.size, float(th @ th)))


def gaussian_regret_bound(theta, T, c, sigma2, n=None) -> BoundReport:
    th = _vec(theta)
    n = th.size if n is None else n
    if n != th.size:
        raise DomainError("n must equal the dimension of theta")
    _check_common(T, c)
    terms = {
        "quadratic": float(th @ th) / (2.0 * sigma2),
        "log": 0.5 * n * math.log1p(T * c * sigma2 / n),
    }
    return _report(terms, {"phi2": gaussian_phi2(T, c, sigma2, n)},
                   {"T": T, "c": c, "sigma2": sigma2, "n": n, "theta": th})


def mlr_gaussian_phi2(T, c, sigma2, n, K):
    return n * sigma2 / (n + T * K * c * sigma2)


def mlr_gaussian_objective(phi2, theta, T, c, sigma2, K):
    th = _vec(theta)
    return meta_bound(T, c, phi2, _iso_gauss_kl(phi2, sigma2, th.size, float(th @ th)), multiplicity=K)


def mlr_gaussian_regret_bound(theta, T, c, sigma2, n, K) -> BoundReport:
    th = _vec(theta)
    if th.size != n * K:
        raise DomainError("theta must hold K*n entries")
    _check_common(T, c)
    terms = {
        "quadratic": float(th @ th) / (2.0 * sigma2),
        "log": 0.5 * n * K * math.log1p(T * K * c * sigma2 / n),
    }
    return _report(terms, {"phi2": mlr_gaussian_phi2(T, c, sigma2, n, K)},
                   {"T": T, "c": c, "sigma2": sigma2, "n": n, "K": K, "theta": th})


# -- multivariate t prior --------------------------------------------------------


def mvt_phi2(T, c, sigma2, nu, n):
    return nu * sigma2 * n / (T * c * nu * sigma2 + (nu + n) * n)


def mvt_objective(phi2, theta, T, c, sigma2, nu):
    """Meta-bound with the t-prior KL upper bound and the Gautschi slack
    ``ln L <= (n/2) ln(2 (nu+1)/nu)`` already applied."""
    th = _vec(theta)
    n = th.size
    return (0.5 * T * c * phi2 + 0.5 * n * math.log((nu + 1.0) / nu)
            + 0.5 * n * math.log(sigma2 / phi2) - 0.5 * n
            + n * (nu + n) * phi2 / (2.0 * nu * sigma2)
            + 0.5 * (nu + n) * math.log1p(float(th @ th) / (nu * sigma2)))


def mvt_regret_bound(theta, T, c, sigma2, nu, n=None) -> BoundReport:
    th = _vec(theta)
    n = th.size if n is None else n
    if n != th.size:
        raise DomainError("n must equal the dimension of theta")
    if not nu > 0:
        raise DomainError("nu must be positive")
    _check_common(T, c)
    # (nu+1)(nu+n)/nu^2 - 1, kept separate so log1p stays accurate for large nu
    excess = (n + 1.0) / nu + n / nu**2
    terms = {
        "quadratic": 0.5 * (nu + n) * math.log1p(float(th @ th) / (nu * sigma2)),
        "log": 0.5 * n * math.log1p(excess + T * c * (nu + 1.0) * sigma2 / (nu * n)),
    }
    return _report(terms, {"phi2": mvt_phi2(T, c, sigma2, nu, n)},
                   {"T": T, "c": c, "sigma2": sigma2, "nu": nu, "n": n, "theta": th})


# -- hierarchical Gaussian priors ------------------------------------------------


def _hg_common_terms(th, hyper_variance, variance, n):
    K = th.shape[0]
    _, _, gamma2 = derived_quantities(hyper_variance, variance, K)
    return {
        "quadratic": float(np.sum(th**2)) / (2.0 * gamma2),
        "difference": hyper_variance / (variance * gamma2) * _pairwise_sq(th),
        "hyper": 0.5 * n * math.log1p(K * hyper_variance / variance),
    }, gamma2


def hg_phi2(T_k, c, hyper_variance, variance, n, K):
    gamma2 = K * hyper_variance + variance
    return n * variance * gamma2 / (n * (gamma2 - hyper_variance) + T_k * c * variance * gamma2)


def _hg_kl(phi2_per_source, th, hyper_variance, variance):
    """KL(N(theta, diag(phi_k^2) per source) || N(0, Sigma kron I_n))."""
    K, n = th.shape
    Sigma = one_level_cov(hyper_variance, variance, K)
    P = np.linalg.inv(Sigma)
    phi2 = np.asarray(phi2_per_source, dtype=float)
    logdet = float(np.linalg.slogdet(Sigma)[1])
    quad = float(np.einsum("kj,kl,lj->", th, P, th))
    return 0.5 * (n * logdet - n * np.sum(np.log(phi2)) - n * K + n * float(np.diag(P) @ phi2) + quad)


def hg_seq_objective(phi2_per_source, theta, T_per_source, c, hyper_variance, variance):
    th = _sources(theta)
    phi2 = np.asarray(phi2_per_source, dtype=float)
    var_term = 0.5 * c * float(np.asarray(T_per_source, dtype=float) @ phi2)
    return var_term + _hg_kl(phi2, th, hyper_variance, variance)


def hg_seq_regret_bound(theta, T_per_source, c, hyper_variance, variance, n=None, K=None) -> BoundReport:
    """Sequential-observation bound; ``T_per_source[k]`` counts observations from source k+1."""
    T_k = np.asarray(T_per_source, dtype=float)
    th = _sources(theta, K if K is not None else T_k.size)
    K, n_ = th.shape
    if n is not None and n != n_:
        raise DomainError("n must match the per-source dimension of theta")
    if T_k.size != K:
        raise DomainError("need one count per source")
    _check_common(float(T_k.min()) if K else 0.0, c)
    terms, gamma2 = _hg_common_terms(th, hyper_variance, variance, n_)
    base = 1.0 - hyper_variance / gamma2
    terms["data"] = 0.5 * n_ * sum(math.log(base + t * c * variance / n_) for t in T_k)
    phis = [hg_phi2(t, c, hyper_variance, variance, n_, K) for t in T_k]
    return _report(terms, {"phi2_per_source": phis, "gamma2": gamma2},
                   {"T_per_source": T_k, "c": c, "hyper_variance": hyper_variance,
                    "variance": variance, "n": n_, "K": K, "theta": th})


def hg_sim_objective(phi2, theta, T, c, hyper_variance, variance):
    th = _sources(theta)
    K = th.shape[0]
    return 0.5 * T * K * c * phi2 + _hg_kl(np.full(K, phi2), th, hyper_variance, variance)


def hg_sim_regret_bound(theta, T, c, hyper_variance, variance, n=None, K=None) -> BoundReport:
    """Simultaneous-observation bound: each of the T steps observes every source."""
    th = _sources(theta, K)
    K, n_ = th.shape
    _check_common(T, c)
    terms, gamma2 = _hg_common_terms(th, hyper_variance, variance, n_)
    terms["data"] = 0.5 * n_ * K * math.log(1.0 - hyper_variance / gamma2 + T * c * variance / n_)
    return _report(terms, {"phi2": hg_phi2(T, c, hyper_variance, variance, n_, K), "gamma2": gamma2},
                   {"T": T, "c": c, "hyper_variance": hyper_variance, "variance": variance,
                    "n": n_, "K": K, "theta": th})


def mlr_hg_regret_bound(theta, T, hyper_variance, variance, n=None, K=None, class_multiplicity=True) -> BoundReport:
    """Hierarchical Gaussian prior over the K class vectors of an MLR model (c = 1/2).

    The data term is ``(nK/2) ln(1 - s0^2/gamma^2 + T K sigma^2 / (2n))``, which
    is what the simultaneous-observation argument gives with the class
    multiplicity K and reduces to :func:`mlr_gaussian_regret_bound` at
    ``s0^2 = 0``.  ``class_multiplicity=False`` drops the factor K inside the logarithm.
    """
    th = _sources(theta, K)
    K, n_ = th.shape
    if T < 0:
        raise DomainError("T must be nonnegative")
    terms, gamma2 = _hg_common_terms(th, hyper_variance, variance, n_)
    mult = K if class_multiplicity else 1.0
    terms["data"] = 0.5 * n_ * K * math.log(1.0 - hyper_variance / gamma2 + mult * T * variance / (2.0 * n_))
    phi2 = hg_phi2(mult * T, 0.5, hyper_variance, variance, n_, K)
    return _report(terms, {"phi2": phi2, "gamma2": gamma2},
                   {"T": T, "c": 0.5, "hyper_variance": hyper_variance, "variance": variance,
                    "n": n_, "K": K, "theta": th, "class_multiplicity": class_multiplicity})


def two_level_bound_from_cov(theta, T_per_source, c, sigma_theta) -> BoundReport:
    """Two-level bound for an arbitrary K x K coordinate covariance ``sigma_theta``.

    ``theta`` is K x n; the quadratic term sums ``theta_i^T Sigma^-1 theta_i``
    over coordinates i, each ``theta_i`` being the K-vector of coordinate i.
    """
    th = _sources(theta)
    K, n = th.shape
    T_k = np.asarray(T_per_source, dtype=float)
    if T_k.size != K:
        raise DomainError("need one count per source")
    _check_common(float(T_k.min()), c)
    S = np.asarray(sigma_theta, dtype=float)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise DomainError("Sigma_theta is not positive definite") from exc
    P = np.linalg.inv(S)
    tr = float(np.trace(P))
    terms = {
        "quadratic": float(np.einsum("ki,kl,li->", th, P, th)),
        "data": 0.5 * n * sum(math.log(2.0 * tr + c * t / n) for t in T_k),
        "logdet": n * float(np.sum(np.log(np.diag(L)))),
    }
    phis = [n / (c * t + 2.0 * n * tr) for t in T_k]
    return _report(terms, {"phi2_per_source": phis, "trace_precision": tr},
                   {"T_per_source": T_k, "c": c, "sigma_theta": S, "theta": th})


def two_level_regret_bound(theta, T_per_source, c, top_variance, superclass_variance,
                           class_variance, superclass_of) -> BoundReport:
    S, _ = two_level_cov(top_variance, superclass_variance, class_variance, superclass_of)
    rep = two_level_bound_from_cov(theta, T_per_source, c, S)
    inputs = dict(rep.inputs)
    inputs.update(top_variance=top_variance, superclass_variance=superclass_variance,
                  class_variance=class_variance, superclass_of=list(superclass_of))
    return BoundReport(rep.total, rep.terms, rep.variational_params, inputs)


# -- sparsity priors ---------------------------------------------------------------


def _support_log_term(m, T, c, sigma2):
    return 0.0 if m == 0 else 0.5 * m * math.log1p(T * c * sigma2 / m)


def spike_slab_regret_bound(theta, T, c, sigma2, p, n=None) -> BoundReport:
    th = _vec(theta)
    n = th.size if n is None else n
    if n != th.size:
        raise DomainError("n must equal the dimension of theta")
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    _check_common(T, c)
    m = int(np.count_nonzero(th))
    terms = {
        "quadratic": float(th @ th) / (2.0 * sigma2),
        "slab_mass": -m * math.log1p(-p),
        "spike_mass": -(n - m) * math.log(p),
        "log": _support_log_term(m, T, c, sigma2),
    }
    return _report(terms, {"support_size": m},
                   {"T": T, "c": c, "sigma2": sigma2, "p": p, "n": n, "theta": th})


def spike_slab_regret_bound_q(theta, T, c, sigma2, q, n=None) -> BoundReport:
    """Variant with ``p = q^(1/n)``, using ``(n-m) ln(1/p) <= ln(1/q)`` and
    ``ln(1/(1-p)) <= ln(n/(1-q))``."""
    th = _vec(theta)
    n = th.size if n is None else n
    if n != th.size:
        raise DomainError("n must equal the dimension of theta")
    if not 0.0 < q < 1.0:
        raise DomainError("q must lie in (0, 1)")
    _check_common(T, c)
    m = int(np.count_nonzero(th))
    terms = {
        "quadratic": float(th @ th) / (2.0 * sigma2),
        "slab_mass": m * (math.log(n) - math.log1p(-q)),
        "spike_mass": -math.log(q),
        "log": _support_log_term(m, T, c, sigma2),
    }
    return _report(terms, {"support_size": m, "p": q ** (1.0 / n)},
                   {"T": T, "c": c, "sigma2": sigma2, "q": q, "n": n, "theta": th})


def lasso_closed_form_phi2(T, c, beta, n):
    if T <= 0:
        raise DomainError("the lasso bound needs T >= 1")
    root = math.sqrt(2.0 * n**2 + T * c * n * beta**2 * math.pi) - math.sqrt(2.0 * n**2)
    return root**2 / (T**2 * c**2 * beta**2 * math.pi)


def lasso_objective(phi2, theta, T, c, beta):
    """Meta-bound with the erf-free Gaussian-Laplace KL bound summed over coordinates.

    Each ``|theta_i| sqrt(1 - exp(-2 theta_i^2 / (pi phi^2)))`` is bounded by
    ``min(sqrt(2 / (pi phi^2)) theta_i^2, |theta_i|)`` and the Gaussian factors
    ``exp(-theta_i^2 / (2 phi^2))`` by 1.
    """
    th = _vec(theta)
    n = th.size
    phi = math.sqrt(phi2)
    mins = np.minimum(math.sqrt(2.0 / (math.pi * phi2)) * th**2, np.abs(th))
    return (0.5 * T * c * phi2 + 0.5 * n * math.log(2.0 * beta**2 / phi2)
            - 0.5 * n * math.log(math.pi * math.e)
            + math.sqrt(2.0) * n * phi / (math.sqrt(math.pi) * beta)
            + float(np.sum(mins)) / beta)


def lasso_optimal_phi2(theta, T, c, beta):
    """Minimise :func:`lasso_objective` over ``phi^2`` (grid in ``ln phi^2`` then Brent)."""
    f = lambda u: lasso_objective(math.exp(u), theta, T, c, beta)  # noqa: E731
    centre = math.log(lasso_closed_form_phi2(T, c, beta, _vec(theta).size))
    grid = centre + np.linspace(-12.0, 12.0, 481)
    vals = np.array([f(u) for u in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12, "maxiter": 500})
    u = res.x if res.fun <= vals[i] else grid[i]
    return math.exp(u)


def lasso_regret_bound(theta, T, c, beta, n=None, phi2="optimal") -> BoundReport:
    """Bayesian-lasso bound evaluated at the minimising ``phi^2``.

    ``phi2="closed_form"`` evaluates the same expression at the closed-form
    choice from :func:`lasso_closed_form_phi2`, which is feasible but not the
    minimiser, so it gives a larger value.
    """
    th = _vec(theta)
    n = th.size if n is None else n
    if n != th.size:
        raise DomainError("n must equal the dimension of theta")
    if not beta > 0:
        raise DomainError("beta must be positive")
    if T < 1:
        raise DomainError("the lasso bound needs T >= 1")
    _check_common(T, c)
    if phi2 == "optimal":
        p2 = lasso_optimal_phi2(th, T, c, beta)
    elif phi2 == "closed_form":
        p2 = lasso_closed_form_phi2(T, c, beta, n)
    else:
        p2 = float(phi2)
    phi = math.sqrt(p2)
    mins = np.minimum(math.sqrt(2.0 / (math.pi * p2)) * th**2, np.abs(th))
    terms = {
        "variance": 0.5 * T * c * p2,
        "log": 0.5 * n * math.log(2.0 * beta**2 / (math.pi * math.e * p2)),
        "spread": math.sqrt(2.0) * n * phi / (math.sqrt(math.pi) * beta),
        "coordinates": float(np.sum(mins)) / beta,
    }
    return _report(terms, {"phi2": p2, "closed_form_phi2": lasso_closed_form_phi2(T, c, beta, n)},
                   {"T": T, "c": c, "beta": beta, "n": n, "theta": th})


# -- hierarchical versus flat ----------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    flat_total: float
    hier_total: float
    delta: float
    condition_holds: bool
    specialized_condition: Optional[bool] = None
    flat: Optional[BoundReport] = None
    hier: Optional[BoundReport] = None

    def to_dict(self):
        return {"flat_total": self.flat_total, "hier_total": self.hier_total, "delta": self.delta,
                "condition_holds": self.condition_holds,
                "specialized_condition": self.specialized_condition}


def specialized_condition(theta, T_per_source, c, variance, constant=SPECIALISED_CONSTANT):
    """Two-source check for ``s0 = s``; returns (holds, lhs, rhs).

    ``4 ||d||^2 + 3 s^2 n sum_k ln((4n/3 + T_k c s^2)/(n + T_k c s^2))
    <= ||theta_1||^2 + ||theta_2||^2 + constant s^2 n``, with ``s^2 = 2 sigma^2``.
    """
    th = _sources(theta, 2)
    n = th.shape[1]
    s2 = 2.0 * variance
    d2 = float(np.sum((th[0] - th[1]) ** 2))
    logs = sum(math.log((4.0 * n / 3.0 + t * c * s2) / (n + t * c * s2)) for t in np.ravel(T_per_source))
    lhs = 4.0 * d2 + 3.0 * s2 * n * logs
    rhs = float(np.sum(th**2)) + constant * s2 * n
    return lhs <= rhs, lhs, rhs


def delta_closed_form(theta, T, c, hyper_variance, variance):
    """Closed-form ``flat - hierarchical`` gap for simultaneous observations."""
    th = _sources(theta)
    K, n = th.shape
    s2, _, gamma2 = derived_quantities(hyper_variance, variance, K)
    return ((K - 1) * hyper_variance / (2.0 * gamma2 * s2) * float(np.sum(th**2))
            - hyper_variance / (variance * gamma2) * _pairwise_sq(th)
            - 0.5 * n * K * math.log((n * s2 / variance * (1.0 - hyper_variance / gamma2) + T * c * s2)
                                     / (n + T * c * s2))
            - 0.5 * n * (math.log1p(K * hyper_variance / variance) + K * math.log(variance / s2)))


def hier_vs_flat_comparison(theta, T, c, hyper_variance, variance, mode="sequential") -> ComparisonReport:
    """Compare the hierarchical bound with K independent Gaussian bounds at ``s^2 = s0^2 + s^2``.

    ``mode="sequential"`` takes per-source counts ``T``; ``"simultaneous"`` a
    single count observed by every source.
    """
    th = _sources(theta)
    K, n = th.shape
    s2 = hyper_variance + variance
    if mode == "sequential":
        T_k = np.atleast_1d(np.asarray(T, dtype=float))
        if T_k.size != K:
            raise DomainError("sequential mode needs one count per source")
        hier = hg_seq_regret_bound(th, T_k, c, hyper_variance, variance)
    elif mode == "simultaneous":
        if np.ndim(T) != 0:
            raise DomainError("simultaneous mode takes a single count T")
        T_k = np.full(K, float(T))
        hier = hg_sim_regret_bound(th, float(T), c, hyper_variance, variance)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    flats = [gaussian_regret_bound(th[k], T_k[k], c, s2) for k in range(K)]
    flat_total = math.fsum(r.total for r in flats)
    flat = _report({f"source_{k + 1}": r.total for k, r in enumerate(flats)},
                   {}, {"s2": s2, "T_per_source": T_k})
    delta = flat_total - hier.total
    special = None
    if K == 2 and math.isclose(hyper_variance, variance, rel_tol=1e-12):
        special = specialized_condition(th, T_k, c, variance)[0]
    return ComparisonReport(flat_total, hier.total, delta, delta >= 0.0, special, flat, hier)


def t_hyperparameter_advisor(n, T, c, sigma2, C=1.0, theta=None):
    """Recommend ``nu = C n`` and report both bounds at ``theta`` (default 0)."""
    if min(n, c, sigma2, C) <= 0 or T < 0:
        raise DomainError("inputs must be positive")
    th = np.zeros(n) if theta is None else _vec(theta)
    nu = C * n
    g = gaussian_regret_bound(th, T, c, sigma2)
    t = mvt_regret_bound(th, T, c, sigma2, nu)
    return {
        "nu": nu,
        "C": C,
        "gaussian": g.to_dict(),
        "mvt": t.to_dict(),
        "quadratic_ratio_cap": (C + 1.0) / C,
        "t_is_smaller": t.total < g.total,
    }
