"""Best-in-hindsight comparators and measured regret."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from . import likelihoods as lk
from .data import Dataset
from .exceptions import DomainError

DEFAULT_RADIUS = 100.0
GRAD_TOL = 1e-10
MAX_ITER = 500
DIVERGENCE_NORM = 1e6
MAX_SUPPORT_DIM = 15


@dataclass
class ComparatorResult:
    theta_hat: np.ndarray
    loss: float
    constraint: Optional[float] = None  # norm cap that was applied, if any
    support: Optional[tuple] = None
    diagnostics: dict = field(default_factory=dict)


def _arrays(data, X=None):
    if isinstance(data, Dataset):
        ds = data
    else:
        data = list(data)
        if not data:
            raise DomainError("data must be nonempty")
        ds = Dataset.from_examples(data)
    if len(ds) == 0:
        raise DomainError("data must be nonempty")
    return (ds.X if X is None else np.asarray(X, dtype=float)), ds.y


def make_objective(likelihood, X, y):
    """Return ``f(theta) -> (L, grad, hess)`` for the cumulative loss."""
    y = lk._check_labels(likelihood, y)
    X = np.asarray(X, dtype=float)

    if isinstance(likelihood, lk.MultiClassLogistic):
        K, n = likelihood.num_classes, X.shape[1]

        def f(theta):
            Z = lk.linear_values(likelihood, theta, X)
            L = float(np.sum(lk.neg_log_loss(likelihood, Z, y)))
            G = lk.grad_neg_log_loss(likelihood, Z, y)
            g = np.einsum("tk,tn->kn", G, X).ravel()
            Hk = lk.hess_neg_log_loss(likelihood, Z)
            H = np.einsum("tkl,ti,tj->kilj", Hk, X, X).reshape(K * n, K * n)
            return L, g, H

        return f

    def f(theta):
        z = X @ theta
        L = float(np.sum(lk.neg_log_loss(likelihood, z, y)))
        g = X.T @ lk.grad_neg_log_loss(likelihood, z, y)
        H = X.T @ (lk.hess_neg_log_loss(likelihood, z)[:, None] * X)
        return L, g, H

    return f


def _newton(f, theta0, penalty=0.0, tol=GRAD_TOL, max_iter=MAX_ITER, diverge_at=DIVERGENCE_NORM):
    """Damped Newton with backtracking on ``f(theta) + penalty/2 ||theta||^2``."""
    theta = np.array(theta0, dtype=float)
    d = theta.size

    def full(th):
        L, g, H = f(th)
        return (L + 0.5 * penalty * float(th @ th), g + penalty * th, H + penalty * np.eye(d))

    val, g, H = full(theta)
    it = 0
    diverged = False
    for it in range(1, max_iter + 1):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            it -= 1
            break
        step = -np.linalg.lstsq(H, g, rcond=None)[0]
        slope = float(g @ step)
        if slope >= 0:  # Hessian lost curvature numerically; fall back to gradient
            step, slope = -g, -gn**2
        t = 1.0
        while True:
            cand = theta + t * step
            cval, cg, cH = full(cand)
            if cval <= val + 1e-4 * t * slope or t < 1e-14:
                break
            t *= 0.5
        if cval > val:  # no progress possible at machine precision
            break
        theta, val, g, H = cand, cval, cg, cH
        if float(np.linalg.norm(theta)) > diverge_at:
            diverged = True
            break
    gn = float(np.linalg.norm(g))
    return theta, val, {"iterations": it, "grad_norm": gn, "converged": gn <= tol, "diverged": diverged}


def _newton_on_sphere(f, theta, radius, rel_tol=1e-10, max_iter=MAX_ITER):
    """Projected Newton for ``min f`` on ``||theta|| = radius`` with a relative KKT test.

    Scale free, so it still makes progress when the loss and its gradient are
    many orders of magnitude below one.
    """
    theta = np.array(theta, dtype=float)
    d = theta.size
    val = f(theta)[0]
    lam = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        val, g, H = f(theta)
        lam = -float(theta @ g) / radius**2
        r = g + lam * theta
        gn = float(np.linalg.norm(g))
        if gn == 0.0 or float(np.linalg.norm(r)) <= rel_tol * gn:
            break
        # divide out the gradient scale so the linear algebra sees O(1) numbers
        rs, Hs = r / gn, H / gn
        K = np.block([[Hs + (lam / gn) * np.eye(d), theta[:, None]], [theta[None, :], np.zeros((1, 1))]])
        step = np.linalg.lstsq(K, -np.concatenate([rs, [0.0]]), rcond=None)[0][:d]
        if not float(rs @ step) < 0:
            step = -rs * radius
        t, moved = 1.0, False
        for _ in range(60):
            cand = theta + t * step
            cand *= radius / float(np.linalg.norm(cand))
            cval = f(cand)[0]
            if cval < val:
                theta, moved = cand, True
                break
            t *= 0.5
        if not moved:
            break
    g = f(theta)[1]
    gn = float(np.linalg.norm(g))
    rel = float(np.linalg.norm(g + lam * theta)) / gn if gn > 0 else 0.0
    return theta, max(lam, 0.0), {"sphere_iterations": it, "relative_kkt_residual": rel}


def _penalised_on_sphere(f, d, radius, tol):
    """Minimise ``f`` over ``||theta|| <= radius`` when the minimiser lies on the sphere.

    Solves penalised problems and searches ``ln(lambda)`` until the norm equals
    the radius; returns the solution and its multiplier.
    """
    cache = {}

    def solve(log_lam):
        if log_lam not in cache:
            cache[log_lam] = _newton(f, np.zeros(d), penalty=math.exp(log_lam), tol=tol)
        return cache[log_lam]

    def gap(log_lam):
        return float(np.linalg.norm(solve(log_lam)[0])) - radius

    lo, hi = math.log(1e-12), math.log(1.0)
    while gap(hi) > 0:
        hi += math.log(10.0)
        if hi > math.log(1e12):
            raise DomainError("could not bracket the norm-constraint multiplier")
    if gap(lo) <= 0:
        th, _, diag = solve(lo)
        nrm = float(np.linalg.norm(th))
        if nrm > 0 and f(2.0 * th)[0] < f(th)[0]:
            # gradients have underflowed the absolute tolerance on separable data
            th, lam, sdiag = _newton_on_sphere(f, th * (radius / nrm), radius)
            return th, lam, dict(diag, **sdiag, boundary_reached=True)
        return th, math.exp(lo), dict(diag, boundary_reached=False)
    root = optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
    th, _, diag = solve(root)
    # put the solution exactly on the sphere
    th = th * (radius / float(np.linalg.norm(th)))
    return th, math.exp(root), dict(diag, boundary_reached=True)


def _erm_core(f, d, radius, default_cap, tol=GRAD_TOL):
    theta, _, diag = _newton(f, np.zeros(d), tol=tol)
    cap = radius if radius is not None else default_cap
    # the loss still falling along the ray through theta means the infimum is not
    # attained (separable data), however small the gradient has become
    unattained = cap is not None and f(2.0 * theta)[0] < f(theta)[0]
    diag = dict(diag, capped=False, multiplier=0.0, ray_decreasing=bool(unattained))
    if cap is not None and (diag["diverged"] or not diag["converged"] or unattained
                            or np.linalg.norm(theta) > cap):
        unconstrained = dict(diag)
        theta, lam, cdiag = _penalised_on_sphere(f, d, cap, tol)
        L, g, _ = f(theta)
        kkt = float(np.linalg.norm(g + lam * theta)) if cdiag["boundary_reached"] else float(np.linalg.norm(g))
        diag = dict(cdiag, capped=True, multiplier=lam, kkt_residual=kkt,
                    unconstrained_diverged=unconstrained["diverged"],
                    unconstrained_converged=unconstrained["converged"])
        return theta, L, cap, diag
    L, g, _ = f(theta)
    return theta, L, cap, diag


def erm(likelihood, data, constraint=None, X=None, tol=GRAD_TOL) -> ComparatorResult:
    """Minimise the cumulative loss, optionally over ``||theta||_2 <= constraint``.

    Classification without an explicit constraint uses the ball of radius
    ``DEFAULT_RADIUS``: a solve that diverges or leaves the ball (separable
    data) is replaced by the minimiser on the ball and flagged as ``capped``.  ``X`` overrides the
    feature matrix (for example a source-embedded design).
    """
    Xm, y = _arrays(data, X)
    d = lk.parameter_dim(likelihood, Xm.shape[1])
    f = make_objective(likelihood, Xm, y)
    cap = DEFAULT_RADIUS if lk.is_classification(likelihood) else None
    theta, L, used, diag = _erm_core(f, d, constraint, cap, tol)
    return ComparatorResult(theta, L, used, None, diag)


def _supports(d, max_support):
    for size in range(max_support + 1):
        yield from itertools.combinations(range(d), size)


def sparse_comparator(likelihood, data, max_support, X=None, constraint=None) -> ComparatorResult:
    """Best parameter with at most ``max_support`` nonzero coordinates (exhaustive search).

    Ties in loss are broken towards the lexicographically smallest support.
    """
    Xm, y = _arrays(data, X)
    d = lk.parameter_dim(likelihood, Xm.shape[1])
    if d > MAX_SUPPORT_DIM:
        raise DomainError(f"exhaustive support search is capped at {MAX_SUPPORT_DIM} coordinates")
    if not 0 <= max_support <= d:
        raise DomainError("max_support must lie in 0..n")
    f_full = make_objective(likelihood, Xm, y)
    cap = DEFAULT_RADIUS if lk.is_classification(likelihood) else None
    best = None
    for S in _supports(d, max_support):
        idx = np.array(S, dtype=int)

        def f(th, idx=idx):
            full = np.zeros(d)
            full[idx] = th
            L, g, H = f_full(full)
            return L, g[idx], H[np.ix_(idx, idx)]

        if idx.size == 0:
            theta_s, L, used, diag = np.zeros(0), f_full(np.zeros(d))[0], None, {"iterations": 0,
                                                                                  "grad_norm": 0.0,
                                                                                  "converged": True}
        else:
            theta_s, L, used, diag = _erm_core(f, idx.size, constraint, cap)
        tol = 1e-12 * max(1.0, abs(L))
        if best is None or L < best[1] - tol or (L <= best[1] + tol and S < best[3]):
            full = np.zeros(d)
            full[idx] = theta_s
            best = (full, L, used, S, diag)
    full, L, used, S, diag = best
    return ComparatorResult(full, L, used, tuple(S), dict(diag, support_size=len(S)))


def measured_regret(run, comp: ComparatorResult) -> float:
    """``L_Bayes - L_theta`` on the shared data."""
    if len(run.per_step_loss) == 0:
        return 0.0
    return float(run.cumulative_loss - comp.loss)
