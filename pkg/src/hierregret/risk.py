"""PAC-Bayes risk bounds for the Gibbs predictor and coverage experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats
from scipy.special import logsumexp, ndtr

from . import likelihoods as lk
from . import priors as pr
from .bounds import BoundReport, gaussian_regret_bound, spike_slab_regret_bound
from .comparator import erm, sparse_comparator
from .data import Dataset
from .exceptions import DomainError
from .online import GaussianMixtureState, posterior_kl_routes, run_online

TEST_POINTS = 100_000


@dataclass(frozen=True)
class RiskBoundReport:
    kappa: float
    kappa_prime: float
    delta: float
    T: int
    payload: float
    bound: float

    def to_dict(self):
        return {k: getattr(self, k) for k in ("kappa", "kappa_prime", "delta", "T", "payload", "bound")}


def _risk_bound(payload, T, kappa, delta):
    if not kappa > 0.5:
        raise DomainError("kappa must exceed 1/2")
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    if T < 1:
        raise DomainError("T must be at least 1")
    kappa_prime = 2.0 * kappa / (2.0 * kappa - 1.0)
    value = math.sqrt(kappa) * math.sqrt((payload + math.log(kappa_prime / delta)) / T)
    return RiskBoundReport(kappa, kappa_prime, delta, int(T), float(payload), value)


def pac_bayes_bound(kl_pt_p0, T, kappa=1.0, delta=0.05) -> RiskBoundReport:
    """``sqrt(kappa) sqrt((KL(P_T || P0) + ln(kappa'/delta)) / T)`` with ``kappa' = 2 kappa / (2 kappa - 1)``."""
    if kl_pt_p0 < 0:
        raise DomainError("KL must be nonnegative")
    return _risk_bound(kl_pt_p0, T, kappa, delta)


def regret_to_risk_bound(bound_report, T, kappa=1.0, delta=0.05) -> RiskBoundReport:
    """The same bound with the KL replaced by a regret bound ``B(theta) + C(T)``."""
    payload = bound_report.total if isinstance(bound_report, BoundReport) else float(bound_report)
    return _risk_bound(payload, T, kappa, delta)


# -- bounded losses --------------------------------------------------------------


def clipped_squared_loss(z, y):
    return np.minimum(1.0, (np.asarray(y) - np.asarray(z)) ** 2)


def zero_one_loss(likelihood, z, y):
    """0-1 loss of the label with the largest conditional probability under linear value z."""
    probs = lk.predictive_probabilities(likelihood, z)
    labels = np.asarray(lk._labels(likelihood))
    pred = labels[np.argmax(probs, axis=-1)]
    return (pred != np.asarray(y)).astype(float)


def default_loss(likelihood):
    if isinstance(likelihood, lk.GaussianRegression):
        return clipped_squared_loss
    return lambda z, y: zero_one_loss(likelihood, z, y)


def expected_clipped_squared(a, s):
    """``E[min(1, Z^2)]`` for ``Z ~ N(a, s^2)`` in closed form (``s = 0`` allowed)."""
    a = np.asarray(a, dtype=float)
    s = np.asarray(s, dtype=float)
    a, s = np.broadcast_arrays(a, s)
    scalar = a.ndim == 0
    a, s = np.atleast_1d(a), np.atleast_1d(s)
    out = np.minimum(1.0, a**2)
    pos = s > 0
    if np.any(pos):
        ap, sp = a[pos], s[pos]
        al, be = (-1.0 - ap) / sp, (1.0 - ap) / sp
        inside = ndtr(be) - ndtr(al)
        phi_a, phi_b = stats.norm.pdf(al), stats.norm.pdf(be)
        val = ((ap**2 + sp**2) * inside + 2.0 * ap * sp * (phi_a - phi_b)
               + sp**2 * (al * phi_a - be * phi_b) + (1.0 - inside))
        out[pos] = val
    return float(out[0]) if scalar else out


def gibbs_clipped_risk_exact(state: GaussianMixtureState, X, y):
    """Per-point ``E_{theta ~ state}[min(1, (y - theta . x)^2)]`` for a Gaussian-mixture posterior."""
    mean, cov = state.component_moments()
    w = np.exp(state.log_weights - logsumexp(state.log_weights))
    a = np.asarray(y)[None, :] - mean @ np.asarray(X).T  # (M, N)
    s2 = np.einsum("ti,mij,tj->mt", X, cov, X)
    return w @ expected_clipped_squared(a, np.sqrt(np.clip(s2, 0.0, None)))


@dataclass(frozen=True)
class GibbsRiskEstimate:
    train: float
    train_se: float
    test: Optional[float]
    test_se: Optional[float]


def _check_bounded(values):
    if np.any(~np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise DomainError("the loss must take values in [0, 1]")
    return values


def gibbs_risk_estimate(posterior, likelihood, train, test=None, loss: Optional[Callable] = None,
                        num_draws=10_000, rng=None) -> GibbsRiskEstimate:
    """Monte-Carlo Gibbs risk on training data and on a test set.

    ``posterior`` is any object with ``sample(rng, size)`` (for example a state
    from :func:`hierregret.online.run_online`) or a callable ``(rng, size) -> draws``.
    ``loss(z, y)`` maps linear values and labels to [0, 1]; the default is the
    0-1 loss for classification and the clipped squared error for regression.
    """
    if rng is None:
        raise DomainError("an explicit random generator is required")
    draw = posterior.sample if hasattr(posterior, "sample") else posterior
    loss = default_loss(likelihood) if loss is None else loss
    thetas = np.atleast_2d(draw(rng, num_draws))

    def evaluate(ds):
        z = lk.linear_values(likelihood, thetas, ds.X)
        vals = _check_bounded(np.asarray(loss(z, ds.y), dtype=float))  # (S, N)
        est = float(vals.mean())
        row = vals.mean(axis=1)
        var = row.var(ddof=1) / row.size if row.size > 1 else 0.0
        if vals.shape[1] > 1:
            col = vals.mean(axis=0)
            var += col.var(ddof=1) / col.size
        return est, math.sqrt(var)

    tr, tr_se = evaluate(train)
    te = te_se = None
    if test is not None:
        te, te_se = evaluate(test)
    return GibbsRiskEstimate(tr, tr_se, te, te_se)


# -- coverage ----------------------------------------------------------------------


def unit_ball_features(rng, T, n):
    """Standard Gaussian vectors with any norm above 1 rescaled to the unit sphere."""
    X = rng.standard_normal((T, n))
    norms = np.linalg.norm(X, axis=1)
    return X / np.maximum(norms, 1.0)[:, None]


def gaussian_regression_data(rng, theta, T, noise_variance):
    X = unit_ball_features(rng, T, theta.size)
    y = X @ theta + math.sqrt(noise_variance) * rng.standard_normal(T)
    return Dataset(X, y)


@dataclass
class CoverageResult:
    coverage: float
    coverage_kl: float
    confidence_interval: tuple
    records: list = field(default_factory=list)
    kappa: float = 1.0
    delta: float = 0.05
    sparse_coverage: Optional[float] = None

    def to_dict(self):
        return {"coverage": self.coverage, "coverage_kl": self.coverage_kl,
                "confidence_interval": list(self.confidence_interval), "kappa": self.kappa,
                "delta": self.delta, "sparse_coverage": self.sparse_coverage, "records": self.records}


def _regret_payload(prior, theta_hat, T, c):
    if isinstance(prior, pr.IsoGaussian):
        return gaussian_regret_bound(theta_hat, T, c, prior.variance)
    return spike_slab_regret_bound(theta_hat, T, c, prior.slab_variance, prior.p)


def coverage_replicate(likelihood, prior, theta_true, T, kappa, delta, rng, num_test=TEST_POINTS):
    """One replicate: train, compute both risk bounds and the realised generalisation gap."""
    train = gaussian_regression_data(rng, theta_true, T, likelihood.noise_variance)
    run = run_online(likelihood, prior, train, method="exact")
    state = run.posterior
    emp = float(np.mean(gibbs_clipped_risk_exact(state, train.X, train.y)))
    test = gaussian_regression_data(rng, theta_true, num_test, likelihood.noise_variance)
    per = gibbs_clipped_risk_exact(state, test.X, test.y)
    true_risk, true_se = float(per.mean()), float(per.std(ddof=1) / math.sqrt(per.size))
    gap = abs(true_risk - emp)
    routes = posterior_kl_routes(run)
    kl = float(max(routes.get("closed_form", routes["loss_difference"]), 0.0))
    c = lk.smoothness_constant(likelihood)
    comp = erm(likelihood, train)
    payload = _regret_payload(prior, comp.theta_hat, T, c)
    kl_rep = pac_bayes_bound(kl, T, kappa, delta)
    regret_rep = regret_to_risk_bound(payload, T, kappa, delta)
    tol = 3.0 * true_se
    rec = {
        "empirical_risk": emp,
        "risk": true_risk,
        "risk_se": true_se,
        "gap": gap,
        "kl": kl,
        "kl_bound": kl_rep.bound,
        "regret_bound": regret_rep.bound,
        "regret_payload": payload.total,
        "covered_kl": bool(gap <= kl_rep.bound + tol),
        "covered_regret": bool(gap <= regret_rep.bound + tol),
    }
    if isinstance(prior, pr.SpikeSlab):
        m = int(np.count_nonzero(theta_true))
        sparse = sparse_comparator(likelihood, train, m)
        sp_payload = _regret_payload(prior, sparse.theta_hat, T, c)
        sp = regret_to_risk_bound(sp_payload, T, kappa, delta)
        rec.update(sparse_payload=sp_payload.total, sparse_bound=sp.bound,
                   covered_sparse=bool(gap <= sp.bound + tol))
    return rec


def coverage_experiment(likelihood, prior, T, kappa=1.0, delta=0.05, num_replicates=200, rng=None,
                        theta_true=None, num_test=TEST_POINTS, confidence=0.99) -> CoverageResult:
    """Fraction of replicates in which the regret-based risk bound covers ``|L(P_T) - L_hat(P_T)|``.

    The data distribution draws features uniformly as in :func:`unit_ball_features`
    and responses ``theta_true . x + noise``; ``theta_true`` defaults to a prior draw.
    Only exact posteriors are accepted (Gaussian regression with an isotropic
    Gaussian or a spike-and-slab prior).
    """
    if not isinstance(likelihood, lk.GaussianRegression) or not isinstance(prior, (pr.IsoGaussian, pr.SpikeSlab)):
        raise DomainError("coverage experiments need an exact posterior (Gaussian regression with "
                          "an isotropic Gaussian or spike-and-slab prior)")
    if rng is None:
        raise DomainError("an explicit random generator is required")
    if theta_true is None:
        theta_true = pr.sample(prior, rng)
    theta_true = np.asarray(theta_true, dtype=float)
    records = []
    for i in range(num_replicates):
        rec = coverage_replicate(likelihood, prior, theta_true, T, kappa, delta, rng, num_test)
        rec["replicate"] = i
        records.append(rec)
    k6 = sum(r["covered_regret"] for r in records)
    k5 = sum(r["covered_kl"] for r in records)
    ci = stats.binomtest(k6, num_replicates).proportion_ci(confidence_level=confidence, method="exact")
    sparse = None
    if records and "covered_sparse" in records[0]:
        sparse = sum(r["covered_sparse"] for r in records) / num_replicates
    return CoverageResult(k6 / num_replicates, k5 / num_replicates, (ci.low, ci.high), records,
                          kappa, delta, sparse)
