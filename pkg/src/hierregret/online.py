"""Sequential Bayesian model-average prediction and its cumulative log-loss.

Two posterior representations are used:

* :class:`GaussianMixtureState` -- a finite mixture of Gaussians kept in
  information form (precision and shift) with an optional per-component
  support mask.  With a Gaussian-regression likelihood every component stays
  Gaussian, so the isotropic and hierarchical Gaussian priors (one component),
  the spike-and-slab prior (one component per support) and the multivariate t
  prior (one component per quadrature node of its mixing variance) are all
  updated exactly.
* :class:`ParticleState` -- weighted particles for every other combination,
  propagated by sequential Monte Carlo with systematic resampling and
  random-walk Metropolis refresh moves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from . import likelihoods as lk
from . import priors as pr
from .data import Dataset
from .divergences import kl_gaussian_gaussian
from .exceptions import DomainError

MAX_ENUMERATED_DIM = 15
MVT_NODES = 256
MVT_QUANTILE = 1e-8
DEFAULT_PARTICLES = 4096
LOG_2PI = math.log(2.0 * math.pi)


# -- posterior states -----------------------------------------------------------


@dataclass(frozen=True)
class GaussianMixtureState:
    log_weights: np.ndarray  # (M,), normalised
    precision: np.ndarray  # (M, d, d)
    shift: np.ndarray  # (M, d); mean = precision^{-1} shift on the support
    mask: Optional[np.ndarray] = None  # (M, d) bool; coordinates off the mask are exactly 0

    @property
    def dim(self):
        return self.shift.shape[1]

    @property
    def num_components(self):
        return self.shift.shape[0]

    def _mask(self):
        if self.mask is None:
            return np.ones(self.shift.shape, dtype=bool)
        return self.mask

    def component_moments(self):
        """Per-component means (M, d) and covariances (M, d, d); covariances are
        zero outside each component's support."""
        m = self._mask().astype(float)
        cov = np.linalg.inv(self.precision) * m[:, :, None] * m[:, None, :]
        mean = np.einsum("mij,mj->mi", cov, self.shift)
        return mean, cov

    def moments(self):
        mean, cov = self.component_moments()
        w = np.exp(self.log_weights)
        mu = w @ mean
        dev = mean - mu
        total = np.einsum("m,mij->ij", w, cov) + np.einsum("m,mi,mj->ij", w, dev, dev)
        return mu, total

    def sample(self, rng, size):
        mean, cov = self.component_moments()
        w = np.exp(self.log_weights - logsumexp(self.log_weights))
        comp = rng.choice(self.num_components, size=size, p=w / w.sum())
        out = np.empty((size, self.dim))
        for j in np.unique(comp):
            idx = np.flatnonzero(comp == j)
            vals, vecs = np.linalg.eigh(cov[j])
            root = vecs * np.sqrt(np.clip(vals, 0.0, None))
            out[idx] = mean[j] + rng.standard_normal((idx.size, self.dim)) @ root.T
        return out


@dataclass(frozen=True)
class ParticleState:
    particles: np.ndarray  # (N, d)
    log_weights: np.ndarray  # (N,), normalised

    @property
    def dim(self):
        return self.particles.shape[1]

    def normalised_weights(self):
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    def moments(self):
        w = self.normalised_weights()
        mu = w @ self.particles
        dev = self.particles - mu
        return mu, (w[:, None] * dev).T @ dev

    def sample(self, rng, size):
        idx = rng.choice(self.particles.shape[0], size=size, p=self.normalised_weights())
        return self.particles[idx]


@dataclass(frozen=True)
class ScaleMixtureState:
    """Mixture over a variance scale: component m is ``theta ~ N(0, v_m I)``
    updated by shared data statistics ``gram = X^T X / s^2`` and ``shift = X^T y / s^2``.

    Component posteriors are ``N(C_m shift, C_m)`` with ``C_m = (I / v_m + gram)^-1``,
    evaluated through one eigendecomposition of ``gram`` so that the extreme
    nodes of the mixing grid stay well conditioned.
    """

    log_weights: np.ndarray  # (M,)
    scales: np.ndarray  # (M,)
    gram: np.ndarray  # (d, d)
    shift: np.ndarray  # (d,)
    mask = None

    @property
    def dim(self):
        return self.shift.size

    @property
    def num_components(self):
        return self.scales.size

    def _factors(self):
        lam, U = np.linalg.eigh(self.gram)
        lam = np.clip(lam, 0.0, None)
        return U, self.scales[:, None] / (1.0 + self.scales[:, None] * lam[None, :])  # (M, d)

    def component_moments(self):
        U, f = self._factors()
        cov = np.einsum("ij,mj,kj->mik", U, f, U)
        mean = np.einsum("mij,j->mi", cov, self.shift)
        return mean, cov

    moments = GaussianMixtureState.moments
    sample = GaussianMixtureState.sample


@dataclass
class OnlineRunResult:
    per_step_loss: np.ndarray
    cumulative_loss: float
    posterior: object
    method: str  # "conjugate_exact" | "quadrature" | "smc"
    diagnostics: dict = field(default_factory=dict)
    likelihood: object = None
    prior: object = None
    design: Optional[np.ndarray] = None
    responses: Optional[np.ndarray] = None
    initial_state: object = None

    @property
    def posterior_summary(self):
        mean, cov = self.posterior.moments()
        return {"mean": mean, "covariance": cov}


# -- data plumbing -----------------------------------------------------------------


def _as_dataset(data):
    if isinstance(data, Dataset):
        return data
    data = list(data)
    return Dataset.from_examples(data) if data else None


def design_matrix(likelihood, prior, data):
    """Feature matrix seen by the parameter vector of ``prior``.

    GLM likelihoods with a hierarchical prior embed each observation in its
    source block; multi-class models use the raw features (the classes play
    the role of sources).
    """
    d = pr.total_dim(prior)
    X = data.X
    hierarchical = isinstance(prior, (pr.HierGaussOneLevel, pr.HierGaussTwoLevel))
    if hierarchical and not isinstance(likelihood, lk.MultiClassLogistic) and data.source is not None:
        X = data.design(prior.num_sources)
    if lk.parameter_dim(likelihood, X.shape[1]) != d:
        raise DomainError(
            f"prior dimension {d} does not match likelihood dimension {lk.parameter_dim(likelihood, X.shape[1])}")
    return X


def _choose_method(likelihood, prior, method):
    gaussian_lik = isinstance(likelihood, lk.GaussianRegression)
    if method == "smc":
        return "smc"
    exact_ok = gaussian_lik and (
        pr.is_gaussian(prior) or isinstance(prior, pr.MultivariateT)
        or (isinstance(prior, pr.SpikeSlab) and prior.dim <= MAX_ENUMERATED_DIM))
    if method == "exact":
        if isinstance(prior, pr.SpikeSlab) and prior.dim > MAX_ENUMERATED_DIM:
            raise DomainError(f"exact spike-and-slab enumeration is capped at n = {MAX_ENUMERATED_DIM}")
        if not exact_ok:
            raise DomainError("no exact path for this likelihood/prior combination")
        return "exact"
    if method != "auto":
        raise DomainError(f"unknown method {method!r}")
    return "exact" if exact_ok else "smc"


# -- exact Gaussian-mixture path ------------------------------------------------


def mvt_mixing_grid(prior, num_nodes=MVT_NODES, tail=MVT_QUANTILE):
    """Nodes and normalised log weights for the t prior's inverse-gamma mixing variance.

    Nodes are equally spaced in ``ln v`` between the ``tail`` and ``1 - tail``
    quantiles; weights are trapezoid weights times ``v`` times the density.
    """
    mix = prior.mixing
    lo, hi = math.log(mix.ppf(tail)), math.log(mix.isf(tail))
    u = np.linspace(lo, hi, num_nodes)
    v = np.exp(u)
    trap = np.full(num_nodes, u[1] - u[0])
    trap[[0, -1]] *= 0.5
    logw = np.log(trap) + u + mix.logpdf(v)
    return v, logw - logsumexp(logw)


def initial_mixture_state(prior):
    d = pr.total_dim(prior)
    eye = np.eye(d)
    if isinstance(prior, pr.IsoGaussian):
        return GaussianMixtureState(np.zeros(1), (eye / prior.variance)[None], np.zeros((1, d)))
    if isinstance(prior, (pr.HierGaussOneLevel, pr.HierGaussTwoLevel)):
        prec = np.kron(np.linalg.inv(pr.source_covariance(prior)), np.eye(prior.dim))
        return GaussianMixtureState(np.zeros(1), prec[None], np.zeros((1, d)))
    if isinstance(prior, pr.MultivariateT):
        v, logw = mvt_mixing_grid(prior)
        return ScaleMixtureState(logw, v, np.zeros((d, d)), np.zeros(d))
    if isinstance(prior, pr.SpikeSlab):
        if d > MAX_ENUMERATED_DIM:
            raise DomainError(f"exact spike-and-slab enumeration is capped at n = {MAX_ENUMERATED_DIM}")
        mask = np.array(list(itertools.product([False, True], repeat=d)), dtype=bool).reshape(-1, d)
        size = mask.sum(axis=1)
        logw = size * math.log1p(-prior.p) + (d - size) * math.log(prior.p)
        diag = np.where(mask, 1.0 / prior.slab_variance, 1.0)
        prec = diag[:, :, None] * eye
        return GaussianMixtureState(logw, prec, np.zeros(mask.shape), mask)
    raise DomainError(f"no exact representation for {type(prior).__name__}")


def _mixture_predictive_parts(state, x, noise_variance):
    """Per-component predictive mean/variance of y at features x."""
    if isinstance(state, ScaleMixtureState):
        U, f = state._factors()
        xu, bu = U.T @ x, U.T @ state.shift
        return x, f @ (xu * bu), f @ (xu * xu) + noise_variance
    m = state._mask()
    xm = m * x  # (M, d)
    rhs = np.stack([state.shift, xm], axis=-1)  # (M, d, 2)
    sol = np.linalg.solve(state.precision, rhs)
    mean = np.einsum("md,md->m", xm, sol[..., 0])
    var = np.einsum("md,md->m", xm, sol[..., 1]) + noise_variance
    return xm, mean, var


def _mixture_step(state, x, y, noise_variance):
    xm, mean, var = _mixture_predictive_parts(state, x, noise_variance)
    log_comp = -0.5 * (LOG_2PI + np.log(var) + (y - mean) ** 2 / var)
    joint = state.log_weights + log_comp
    log_pred = logsumexp(joint)
    if isinstance(state, ScaleMixtureState):
        new = ScaleMixtureState(joint - log_pred, state.scales,
                                state.gram + np.outer(x, x) / noise_variance,
                                state.shift + x * (y / noise_variance))
    else:
        new = GaussianMixtureState(
            joint - log_pred,
            state.precision + xm[:, :, None] * xm[:, None, :] / noise_variance,
            state.shift + xm * (y / noise_variance),
            state.mask,
        )
    return float(log_pred), new


def _run_exact(likelihood, prior, X, y):
    state0 = initial_mixture_state(prior)
    state = state0
    sig2 = likelihood.noise_variance
    losses = np.empty(len(y))
    for t in range(len(y)):
        lp, state = _mixture_step(state, X[t], y[t], sig2)
        if not np.isfinite(lp):
            raise DomainError(f"non-finite predictive density at step {t}")
        losses[t] = -lp
    method = "quadrature" if isinstance(prior, pr.MultivariateT) else "conjugate_exact"
    return losses, state, state0, method, {"num_components": state.num_components}


# -- sequential Monte Carlo path ------------------------------------------------------


def _particle_loglik(likelihood, particles, X, y):
    """Per-particle log-likelihood of the rows (X, y): shape (N,)."""
    if len(y) == 0:
        return np.zeros(particles.shape[0])
    z = lk.linear_values(likelihood, particles, X)
    return -np.sum(lk.neg_log_loss(likelihood, z, y), axis=1)


def _systematic_resample(weights, rng):
    N = weights.size
    positions = (rng.random() + np.arange(N)) / N
    idx = np.searchsorted(np.cumsum(weights), positions, side="right")
    return np.minimum(idx, N - 1)


def _log_prior(prior, particles):
    return pr.log_density_total(prior, particles)


def _refresh(prior, likelihood, particles, cum_ll, X, y, rng, num_moves):
    """Random-walk Metropolis moves targeting prior x likelihood of the first t rows.

    For spike-and-slab priors the walk acts on the active coordinates only and
    each sweep is followed by a birth/death move that proposes a fresh slab
    value (or zero) for one coordinate.
    """
    N, d = particles.shape
    spike = isinstance(prior, pr.SpikeSlab)
    accepted = 0
    total = 0
    for _ in range(num_moves):
        active = particles != 0.0 if spike else np.ones_like(particles, dtype=bool)
        spread = np.std(particles, axis=0)
        spread = np.where(spread > 0, spread, 1e-3)
        scale = 2.38 / math.sqrt(d) * spread
        prop = particles + active * rng.standard_normal((N, d)) * scale
        lp_old = _log_prior(prior, particles) + cum_ll
        ll_new = _particle_loglik(likelihood, prop, X, y)
        lp_new = _log_prior(prior, prop) + ll_new
        acc = np.log(rng.random(N)) < lp_new - lp_old
        particles = np.where(acc[:, None], prop, particles)
        cum_ll = np.where(acc, ll_new, cum_ll)
        accepted += int(acc.sum())
        total += N
        if spike:
            j = rng.integers(0, d, size=N)
            prop = particles.copy()
            cur = prop[np.arange(N), j]
            birth = cur == 0.0
            prop[np.arange(N), j] = np.where(
                birth, math.sqrt(prior.slab_variance) * rng.standard_normal(N), 0.0)
            ll_new = _particle_loglik(likelihood, prop, X, y)
            log_odds = math.log1p(-prior.p) - math.log(prior.p)
            log_ratio = np.where(birth, log_odds, -log_odds) + ll_new - cum_ll
            acc = np.log(rng.random(N)) < log_ratio
            particles = np.where(acc[:, None], prop, particles)
            cum_ll = np.where(acc, ll_new, cum_ll)
    return particles, cum_ll, accepted / max(total, 1)


def _run_smc(likelihood, prior, X, y, rng, num_particles, num_moves):
    N = int(num_particles)
    particles = pr.sample(prior, rng, size=N)
    state0 = ParticleState(particles.copy(), np.full(N, -math.log(N)))
    logw = np.full(N, -math.log(N))
    cum_ll = np.zeros(N)
    T = len(y)
    losses = np.empty(T)
    step_se = np.empty(T)
    ess_hist = np.empty(T)
    acc_hist = []
    resamples = 0
    for t in range(T):
        ll_t = _particle_loglik(likelihood, particles, X[t:t + 1], y[t:t + 1])
        joint = logw + ll_t
        log_pred = logsumexp(joint)
        if not np.isfinite(log_pred):
            raise DomainError(f"non-finite predictive density at step {t}")
        w = np.exp(logw)
        p = np.exp(ll_t - log_pred)  # per-particle density relative to the estimate
        step_se[t] = math.sqrt(float(np.sum(w**2 * (p - 1.0) ** 2)))
        losses[t] = -log_pred
        logw = joint - log_pred
        cum_ll = cum_ll + ll_t
        wn = np.exp(logw)
        ess = 1.0 / float(np.sum(wn**2))
        ess_hist[t] = ess
        if ess < N / 2.0:
            idx = _systematic_resample(wn, rng)
            particles, cum_ll = particles[idx], cum_ll[idx]
            logw = np.full(N, -math.log(N))
            particles, cum_ll, acc = _refresh(prior, likelihood, particles, cum_ll,
                                              X[:t + 1], y[:t + 1], rng, num_moves)
            acc_hist.append(acc)
            resamples += 1
    diag = {
        "num_particles": N,
        "ess": ess_hist.tolist(),
        "step_standard_error": step_se.tolist(),
        "cumulative_standard_error": float(math.sqrt(np.sum(step_se**2))),
        "resample_count": resamples,
        "acceptance_rates": acc_hist,
    }
    return losses, ParticleState(particles, logw), state0, "smc", diag


# -- public API ----------------------------------------------------------------------


def run_online(likelihood, prior, data, method="auto", rng=None, num_particles=DEFAULT_PARTICLES,
               num_moves=3) -> OnlineRunResult:
    """Run the Bayesian model-average learner over ``data`` in order.

    ``method`` is ``"auto"`` (exact whenever possible), ``"exact"`` or ``"smc"``.
    ``rng`` is required for the particle path.
    """
    ds = _as_dataset(data)
    if ds is None or len(ds) == 0:
        state = (initial_mixture_state(prior)
                 if _choose_method(likelihood, prior, method) == "exact" else None)
        return OnlineRunResult(np.zeros(0), 0.0, state, "conjugate_exact", {}, likelihood, prior,
                               None, np.zeros(0), state)
    X = design_matrix(likelihood, prior, ds)
    y = lk._check_labels(likelihood, ds.y)
    chosen = _choose_method(likelihood, prior, method)
    if chosen == "exact":
        losses, state, state0, label, diag = _run_exact(likelihood, prior, X, y)
    else:
        if rng is None:
            raise DomainError("the particle path needs an explicit random generator")
        losses, state, state0, label, diag = _run_smc(likelihood, prior, X, y, rng, num_particles, num_moves)
    if not np.all(np.isfinite(losses)):
        raise DomainError("non-finite per-step loss")
    return OnlineRunResult(losses, math.fsum(losses), state, label, diag, likelihood, prior, X, y, state0)


@dataclass(frozen=True)
class Predictive:
    """Predictive distribution of y at a single feature vector."""

    likelihood: object
    probabilities: Optional[np.ndarray] = None  # classification
    weights: Optional[np.ndarray] = None  # regression mixture over components
    means: Optional[np.ndarray] = None
    variances: Optional[np.ndarray] = None

    @property
    def mean(self):
        if self.probabilities is not None:
            raise DomainError("use probabilities for classification predictives")
        return float(self.weights @ self.means)

    @property
    def variance(self):
        m = self.mean
        return float(self.weights @ (self.variances + (self.means - m) ** 2))

    def logpdf(self, y):
        if self.probabilities is not None:
            labels = lk._labels(self.likelihood)
            y = np.atleast_1d(y)
            idx = [labels.index(float(v)) for v in y]
            return np.log(self.probabilities[idx])
        y = np.asarray(y, dtype=float)[..., None]
        comp = -0.5 * (LOG_2PI + np.log(self.variances) + (y - self.means) ** 2 / self.variances)
        return logsumexp(comp + np.log(self.weights), axis=-1)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def sample(self, rng, size):
        if self.probabilities is not None:
            labels = np.asarray(lk._labels(self.likelihood))
            return labels[rng.choice(labels.size, size=size, p=self.probabilities)]
        comp = rng.choice(self.weights.size, size=size, p=self.weights)
        return self.means[comp] + np.sqrt(self.variances[comp]) * rng.standard_normal(size)


def posterior_predictive(state, likelihood, x, rng=None, num_samples=100_000) -> Predictive:
    """Predictive distribution of y at features ``x`` under a posterior state.

    Regression on a Gaussian-mixture state is exact.  Classification on a
    Gaussian-mixture state uses Gauss-Hermite quadrature for binary models and
    Monte Carlo over ``num_samples`` draws (requires ``rng``) for multi-class
    models; on a particle state everything is a weighted particle average.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(likelihood, lk.GaussianRegression):
        if isinstance(state, (GaussianMixtureState, ScaleMixtureState)):
            if x.size != state.dim:
                raise DomainError("feature dimension does not match the posterior")
            _, mean, var = _mixture_predictive_parts(state, x, likelihood.noise_variance)
            w = np.exp(state.log_weights - logsumexp(state.log_weights))
            return Predictive(likelihood, None, w, mean, var)
        z = lk.linear_values(likelihood, state.particles, x[None])[:, 0]
        return Predictive(likelihood, None, state.normalised_weights(), z,
                          np.full(z.shape, likelihood.noise_variance))
    if isinstance(state, ParticleState):
        z = lk.linear_values(likelihood, state.particles, x[None])[:, 0]
        probs = state.normalised_weights() @ lk.predictive_probabilities(likelihood, z)
        return Predictive(likelihood, probs / probs.sum())
    if isinstance(likelihood, lk.BinaryLogistic):
        if x.size != state.dim:
            raise DomainError("feature dimension does not match the posterior")
        mean, cov = state.component_moments()
        zm = mean @ x
        zs = np.sqrt(np.einsum("i,mij,j->m", x, cov, x))
        nodes, gw = np.polynomial.hermite_e.hermegauss(80)
        gw = gw / gw.sum()
        z = zm[:, None] + zs[:, None] * nodes[None, :]
        comp = np.einsum("g,mgk->mk", gw, lk.predictive_probabilities(likelihood, z))
        w = np.exp(state.log_weights - logsumexp(state.log_weights))
        probs = w @ comp
        return Predictive(likelihood, probs / probs.sum())
    if rng is None:
        raise DomainError("multi-class predictives from a Gaussian state need an rng")
    draws = state.sample(rng, num_samples)
    z = lk.linear_values(likelihood, draws, x[None])[:, 0]
    probs = lk.predictive_probabilities(likelihood, z).mean(axis=0)
    return Predictive(likelihood, probs / probs.sum())


def expected_posterior_loss(run: OnlineRunResult):
    """``L_{P_T}``: posterior expectation of the cumulative loss of a fixed parameter.

    Exact for Gaussian-mixture posteriors with Gaussian regression; a weighted
    particle average otherwise.
    """
    if len(run.per_step_loss) == 0:
        return 0.0
    X, y, spec = run.design, run.responses, run.likelihood
    state = run.posterior
    if isinstance(state, (GaussianMixtureState, ScaleMixtureState)) and isinstance(spec, lk.GaussianRegression):
        s2 = spec.noise_variance
        mean, cov = state.component_moments()
        resid = y[None, :] - mean @ X.T  # (M, T)
        spread = np.einsum("ti,mij,tj->mt", X, cov, X)
        per = 0.5 * X.shape[0] * (LOG_2PI + math.log(s2)) + np.sum(resid**2 + spread, axis=1) / (2.0 * s2)
        w = np.exp(state.log_weights - logsumexp(state.log_weights))
        return float(w @ per)
    if isinstance(state, ParticleState):
        ll = _particle_loglik(spec, state.particles, X, y)
        return float(-state.normalised_weights() @ ll)
    raise DomainError("expected posterior loss is unavailable for this run")


def posterior_kl_routes(run: OnlineRunResult):
    """``KL(P_T || P0)`` by the loss-difference identity and, where available, in closed form."""
    out = {}
    if len(run.per_step_loss) == 0:
        return {"loss_difference": 0.0, "closed_form": 0.0}
    out["loss_difference"] = run.cumulative_loss - expected_posterior_loss(run)
    post, prior0 = run.posterior, run.initial_state
    if isinstance(post, GaussianMixtureState) and post.num_components == 1:
        m1, c1 = post.component_moments()
        m0, c0 = prior0.component_moments()
        out["closed_form"] = kl_gaussian_gaussian(m1[0], c1[0], m0[0], c0[0]).value
    elif isinstance(post, GaussianMixtureState) and post.mask is not None:
        # supports are mutually singular, so the KL splits over components
        m1, c1 = post.component_moments()
        m0, c0 = prior0.component_moments()
        w1 = post.log_weights - logsumexp(post.log_weights)
        w0 = prior0.log_weights - logsumexp(prior0.log_weights)
        total = 0.0
        for i in range(post.num_components):
            s = post.mask[i]
            kl_i = 0.0
            if s.any():
                kl_i = kl_gaussian_gaussian(m1[i][s], c1[i][np.ix_(s, s)], m0[i][s], c0[i][np.ix_(s, s)]).value
            total += math.exp(w1[i]) * (w1[i] - w0[i] + kl_i)
        out["closed_form"] = total
    return out


def posterior_kl_from_prior(run: OnlineRunResult, data=None) -> float:
    """``KL(P_T || P0) = L_Bayes - L_{P_T}`` (an estimate for particle runs)."""
    return float(posterior_kl_routes(run)["loss_difference"])


def gaussian_log_marginal(X, y, prior_cov, noise_variance):
    """``ln p(y | X)`` for ``y = X theta + eps`` with ``theta ~ N(0, prior_cov)``."""
    X = np.asarray(X, dtype=float)
    C = X @ prior_cov @ X.T + noise_variance * np.eye(X.shape[0])
    L = np.linalg.cholesky(C)
    w = np.linalg.solve(L, y)
    return float(-0.5 * (X.shape[0] * LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + w @ w))


def iso_log_marginal(X, y, v, noise_variance):
    """``ln p(y | X)`` under ``theta ~ N(0, v I)``, via the eigenvalues of ``X^T X``.

    Stable for any ``v > 0`` because no T x T covariance is formed.
    """
    X = np.asarray(X, dtype=float)
    T = X.shape[0]
    lam, U = np.linalg.eigh(X.T @ X)
    lam = np.clip(lam, 0.0, None)
    b = U.T @ (X.T @ y)
    s2 = noise_variance
    quad = (float(y @ y) - float(np.sum(b**2 / (lam + s2 / v)))) / s2
    logdet = T * math.log(s2) + float(np.sum(np.log1p(v * lam / s2)))
    return -0.5 * (T * LOG_2PI + logdet + quad)


def mvt_log_marginal_quadrature(prior, X, y, noise_variance):
    """Marginal likelihood under the t prior by adaptive quadrature over ``ln v``."""
    mix = prior.mixing
    lo, hi = math.log(mix.ppf(1e-14)), math.log(mix.isf(1e-14))
    base = iso_log_marginal(X, y, 1.0, noise_variance)

    def f(u):
        v = math.exp(u)
        return math.exp(iso_log_marginal(X, y, v, noise_variance) - base + u + mix.logpdf(v))

    val, _ = integrate.quad(f, lo, hi, limit=500, epsrel=1e-12, epsabs=0.0)
    return base + math.log(val)


# -- compression lemma on a finite grid ----------------------------------------------


def grid_losses(grid, likelihood, data):
    """Cumulative loss ``L_theta`` for each grid parameter (G,)."""
    ds = _as_dataset(data)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if ds is None or len(ds) == 0:
        return np.zeros(grid.shape[0])
    z = lk.linear_values(likelihood, grid, ds.X)
    return np.sum(lk.neg_log_loss(likelihood, z, ds.y), axis=1)


def discrete_posterior(prior_masses, losses):
    lw = np.log(prior_masses) - losses
    return np.exp(lw - logsumexp(lw))


def compression_check(grid, prior_masses, likelihood, data, Q):
    """Return ``(L_Bayes, L_Q + KL(Q || P0))`` for a discrete prior on ``grid``."""
    P0 = np.asarray(prior_masses, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P0.shape != Q.shape or np.any(P0 < 0) or np.any(Q < 0):
        raise DomainError("prior and Q must be nonnegative masses on the same grid")
    if not (math.isclose(P0.sum(), 1.0, abs_tol=1e-9) and math.isclose(Q.sum(), 1.0, abs_tol=1e-9)):
        raise DomainError("prior and Q masses must sum to 1")
    if np.any((Q > 0) & (P0 == 0)):
        raise DomainError("Q puts mass where the prior has none")
    L = grid_losses(grid, likelihood, data)
    with np.errstate(divide="ignore"):
        lhs = -float(logsumexp(np.log(P0) - L))
    pos = Q > 0
    kl = float(np.sum(Q[pos] * (np.log(Q[pos]) - np.log(P0[pos]))))
    rhs = float(Q @ L) + kl
    return lhs, rhs
