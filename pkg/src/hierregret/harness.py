"""Config-driven experiment runner.

Replicate ``i`` of an experiment with master seed ``s`` draws from
``numpy.random.default_rng(SeedSequence([s, i]))``; risk-coverage replicates use
``SeedSequence([s, g, i])`` for grid point ``g``, and a ground-truth parameter
drawn from the prior uses ``SeedSequence([s])``.  Results are therefore
identical for any worker count.

Every record that carries a bound also carries ``bound_call`` (function name
and keyword arguments) so the total can be re-derived through
:mod:`hierregret.bounds`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bd
from . import likelihoods as lk
from . import priors as pr
from .comparator import erm, measured_regret, sparse_comparator
from .config import SCHEMA_VERSION, ExperimentConfig, parse_config
from .data import Dataset
from .divergences import (gaussian_log_pdf, gaussian_sampler, kl_gaussian_gaussian, kl_gaussian_laplace_quadrature,
                          kl_gaussian_laplace_upper, kl_gaussian_t_upper, kl_monte_carlo, t_log_pdf)
from .exceptions import DomainError
from .online import design_matrix, run_online
from .risk import coverage_replicate, unit_ball_features

PLOT_KINDS = {
    "regret_vs_T": "regret_vs_bound",
    "delta_vs_separation": "hier_vs_flat",
    "bound_vs_nu": "bound_table",
    "coverage_vs_delta": "risk_coverage",
    "bound_vs_n": "sparsity_sweep",
    "kl_check": "kl_verification",
}
DEFAULT_PLOTS = {v: k for k, v in PLOT_KINDS.items()}


def replicate_rng(master_seed, *index):
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, index)]))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


# -- data generation ---------------------------------------------------------------


def source_ids(cfg: ExperimentConfig, T, rng):
    K = cfg.K
    sched = cfg.data.source_schedule
    if sched == "alternating":
        return (np.arange(T) % K) + 1
    if sched == "blocked":
        return np.sort((np.arange(T) * K) // max(T, 1)) + 1
    w = np.ones(K) if cfg.data.source_weights is None else np.asarray(cfg.data.source_weights, dtype=float)
    return rng.choice(K, size=T, p=w / w.sum()) + 1


def _uses_sources(cfg):
    return cfg.prior.family in ("hier_one_level", "hier_two_level") and cfg.likelihood.family != "multiclass_logistic"


def generate_dataset(cfg: ExperimentConfig, likelihood, prior, T, rng, theta_true=None):
    """Synthetic data: unit-ball features and labels from the model at ``theta_true``."""
    if theta_true is None:
        if cfg.data.label_mechanism == "fixed":
            theta_true = np.asarray(cfg.data.theta_true, dtype=float)
        else:
            theta_true = pr.sample(prior, rng)
    X = unit_ball_features(rng, T, cfg.n)
    src = source_ids(cfg, T, rng) if _uses_sources(cfg) else None
    design = X if src is None else Dataset(X, np.zeros(T), src).design(cfg.K)
    z = lk.linear_values(likelihood, theta_true, design)
    if isinstance(likelihood, lk.GaussianRegression):
        y = z + math.sqrt(likelihood.noise_variance) * rng.standard_normal(T)
    elif isinstance(likelihood, lk.BinaryLogistic):
        y = np.where(rng.random(T) < lk.predictive_probabilities(likelihood, z)[:, 1], 1.0, -1.0)
    else:
        probs = lk.predictive_probabilities(likelihood, z)
        u = rng.random((T, 1))
        y = np.minimum((np.cumsum(probs, axis=1) < u).sum(axis=1), likelihood.num_classes - 1) + 1.0
    return Dataset(X, y, src), theta_true


# -- bound dispatch ----------------------------------------------------------------


def bound_call(cfg: ExperimentConfig, family, theta, T, counts=None, nu=None):
    """Return ``(function_name, kwargs)`` for the bound matching ``family``."""
    p = cfg.prior
    c = cfg.smoothness
    mlr = cfg.likelihood.family == "multiclass_logistic"
    n, K = cfg.n, (cfg.likelihood.num_classes if mlr else cfg.K)
    th = np.asarray(theta, dtype=float)
    if counts is None:
        counts = [T] * K if mlr else [T // K + (1 if k < T % K else 0) for k in range(K)]
    counts = [int(t) for t in counts]
    if family == "iso_gaussian":
        if mlr:
            return "mlr_gaussian_regret_bound", dict(theta=th.ravel(), T=T, c=c, sigma2=p.variance, n=n, K=K)
        return "gaussian_regret_bound", dict(theta=th.ravel(), T=T, c=c, sigma2=p.variance)
    if family == "multivariate_t":
        df = nu if nu is not None else (p.df if p.df is not None else float(n))
        return "mvt_regret_bound", dict(theta=th.ravel(), T=T, c=c, sigma2=p.variance, nu=df)
    if family == "hier_one_level":
        if mlr:
            return "mlr_hg_regret_bound", dict(theta=th.reshape(K, n), T=T, hyper_variance=p.hyper_variance,
                                               variance=p.variance)
        return "hg_seq_regret_bound", dict(theta=th.reshape(K, n), T_per_source=counts, c=c,
                                           hyper_variance=p.hyper_variance, variance=p.variance)
    if family == "hier_two_level":
        sc = list(p.superclass_of) if p.superclass_of else [1] * K
        return "two_level_regret_bound", dict(theta=th.reshape(K, n), T_per_source=counts, c=c,
                                              top_variance=p.top_variance,
                                              superclass_variance=p.superclass_variance,
                                              class_variance=p.variance, superclass_of=sc)
    if family == "spike_slab":
        if p.p is not None:
            return "spike_slab_regret_bound", dict(theta=th.ravel(), T=T, c=c, sigma2=p.variance, p=p.p)
        q = p.q if p.q is not None else 0.5
        return "spike_slab_regret_bound_q", dict(theta=th.ravel(), T=T, c=c, sigma2=p.variance, q=q)
    if family == "laplace":
        return "lasso_regret_bound", dict(theta=th.ravel(), T=T, c=c, beta=p.scale)
    raise DomainError(f"unknown family {family!r}")


def evaluate_call(name, kwargs):
    return getattr(bd, name)(**kwargs)


def rederive_bound(record):
    """Recompute the bound total stored in a record from its ``bound_call``."""
    call = record["bound_call"]
    kwargs = {k: (np.asarray(v) if isinstance(v, list) and k == "theta" else v) for k, v in call["kwargs"].items()}
    return evaluate_call(call["function"], kwargs).total


def _bound_record(name, kwargs):
    rep = evaluate_call(name, kwargs)
    return {
        "bound_total": rep.total,
        "terms": rep.terms,
        "variational_params": _plain(rep.variational_params),
        "bound_call": {"function": name, "kwargs": _plain(kwargs)},
    }


def _family_dim(cfg, family):
    if cfg.likelihood.family == "multiclass_logistic":
        return cfg.n * cfg.likelihood.num_classes
    return cfg.n * (cfg.K if family in ("hier_one_level", "hier_two_level") else 1)


# -- experiment kinds -----------------------------------------------------------


def _bound_table(cfg, _task):
    T = cfg.T
    records = []
    for fam in cfg.families:
        d = _family_dim(cfg, fam)
        theta = np.zeros(d)
        if cfg.data.theta_true is not None and len(cfg.data.theta_true) == d:
            theta = np.asarray(cfg.data.theta_true, dtype=float)
        if fam == "laplace" and T < 1:
            continue
        name, kw = bound_call(cfg, fam, theta, T, cfg.T_per_source)
        records.append(dict(family=fam, T=T, n=cfg.n, **_bound_record(name, kw)))
    for nu in cfg.nu_values or []:
        name, kw = bound_call(cfg, "multivariate_t", np.zeros(_family_dim(cfg, "multivariate_t")), T, nu=nu)
        records.append(dict(family="multivariate_t", nu=nu, T=T, n=cfg.n, **_bound_record(name, kw)))
    return records


def _regret_vs_bound(cfg, task):
    i = task
    rng = replicate_rng(cfg.seed, i)
    likelihood = cfg.likelihood.build()
    prior = cfg.prior.build(cfg.n, cfg.K)
    T_values = sorted(cfg.T_values or [cfg.T])
    Tmax = T_values[-1]
    data, theta_true = generate_dataset(cfg, likelihood, prior, Tmax, rng)
    run = run_online(likelihood, prior, data, method=cfg.method, rng=rng, num_particles=cfg.num_particles)
    cum = np.concatenate([[0.0], np.cumsum(run.per_step_loss)])
    step_se = np.asarray(run.diagnostics.get("step_standard_error", np.zeros(Tmax)))
    cum_se = np.concatenate([[0.0], np.sqrt(np.cumsum(step_se**2))])
    X_all = design_matrix(likelihood, prior, data) if Tmax else data.X
    support = int(np.count_nonzero(theta_true))
    records = []
    for T in T_values:
        counts = None
        if _uses_sources(cfg):
            counts = np.bincount(data.source[:T] - 1, minlength=cfg.K).tolist()
        if T == 0:
            theta_hat, comp_loss, comp_diag = np.zeros(pr.total_dim(prior)), 0.0, {}
        else:
            sub = Dataset(data.X[:T], data.y[:T], None if data.source is None else data.source[:T])
            if cfg.prior.family == "spike_slab":
                comp = sparse_comparator(likelihood, sub, support)
            else:
                comp = erm(likelihood, sub, X=X_all[:T])
            theta_hat, comp_loss = comp.theta_hat, comp.loss
            comp_diag = dict(comp.diagnostics, constraint=comp.constraint,
                             support=None if comp.support is None else list(comp.support))
        regret = float(cum[T] - comp_loss)
        name, kw = bound_call(cfg, cfg.prior.family, theta_hat, T, counts)
        rec = dict(replicate=i, T=T, n=cfg.n, method=run.method, measured_regret=regret,
                   comparator_loss=float(comp_loss), bayes_loss=float(cum[T]),
                   smc_standard_error=float(cum_se[T]), comparator=_plain(comp_diag),
                   theta_hat=_plain(theta_hat), **_bound_record(name, kw))
        slack = 3.0 * rec["smc_standard_error"] if run.method == "smc" else 0.0
        rec["violation"] = bool(regret > rec["bound_total"] + slack)
        records.append(rec)
    return records


def _separation_thetas(cfg, sep):
    n = cfg.n
    base = np.zeros(n)
    base[0] = cfg.base_norm
    u = np.zeros(n)
    u[1 if n > 1 else 0] = 1.0
    return np.stack([base + 0.5 * sep * u, base - 0.5 * sep * u])


def _hier_vs_flat(cfg, _task):
    p = cfg.prior
    c = cfg.smoothness
    seps = cfg.separation_values if cfg.separation_values is not None else list(np.linspace(0.0, 5.0, 51))
    T_arg = (cfg.T_per_source or [cfg.T] * cfg.K) if cfg.mode == "sequential" else cfg.T
    records = []
    for sep in seps:
        th = _separation_thetas(cfg, sep)
        rep = bd.hier_vs_flat_comparison(th, T_arg, c, p.hyper_variance, p.variance, mode=cfg.mode)
        rec = dict(separation=float(np.linalg.norm(th[0] - th[1])), **_plain(rep.to_dict()),
                   theta=_plain(th), T=_plain(T_arg), c=c,
                   hier_terms=rep.hier.terms)
        if cfg.mode == "simultaneous":
            rec["delta_closed_form"] = bd.delta_closed_form(th, cfg.T, c, p.hyper_variance, p.variance)
        records.append(rec)
    return records


def _sparsity_sweep(cfg, _task):
    c = cfg.smoothness
    p_fixed = cfg.prior.p if cfg.prior.p is not None else 0.5
    q = cfg.prior.q if cfg.prior.q is not None else 0.5
    records = []
    for n in sorted(cfg.n_values):
        theta = np.zeros(n)
        theta[:cfg.support_size] = cfg.coefficient
        fixed = dict(theta=theta, T=cfg.T, c=c, sigma2=cfg.prior.variance, p=p_fixed)
        scaled = dict(theta=theta, T=cfg.T, c=c, sigma2=cfg.prior.variance, q=q)
        a = bd.spike_slab_regret_bound(**fixed)
        b = bd.spike_slab_regret_bound_q(**scaled)
        records.append(dict(n=n, support_size=cfg.support_size, bound_fixed_p=a.total, bound_q=b.total,
                            bound_total=b.total,
                            bound_call={"function": "spike_slab_regret_bound_q", "kwargs": _plain(scaled)},
                            fixed_p_call={"function": "spike_slab_regret_bound", "kwargs": _plain(fixed)}))
    return records


def _risk_tasks(cfg):
    grid = [(k, d) for k in cfg.kappa_values for d in cfg.delta_values]
    return [(g, i) for g in range(len(grid)) for i in range(cfg.replicates)]


def _risk_truth(cfg, prior):
    if cfg.data.label_mechanism == "fixed":
        return np.asarray(cfg.data.theta_true, dtype=float)
    return pr.sample(prior, np.random.default_rng(np.random.SeedSequence([cfg.seed])))


def _risk_coverage(cfg, task):
    g, i = task
    grid = [(k, d) for k in cfg.kappa_values for d in cfg.delta_values]
    kappa, delta = grid[g]
    likelihood = cfg.likelihood.build()
    prior = cfg.prior.build(cfg.n)
    theta = _risk_truth(cfg, prior)
    rec = coverage_replicate(likelihood, prior, theta, cfg.T, kappa, delta, replicate_rng(cfg.seed, g, i),
                             cfg.test_points)
    return [dict(replicate=i, grid_index=g, kappa=kappa, delta=delta, T=cfg.T, **_plain(rec))]


def random_spd(rng, n, floor=0.1):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + floor * np.eye(n)


def _kl_verification(cfg, task):
    i = task
    rng = replicate_rng(cfg.seed, i)
    n = int(rng.integers(1, 6))
    mu1, mu2 = rng.standard_normal(n), rng.standard_normal(n)
    S1, S2 = random_spd(rng, n), random_spd(rng, n)
    N = cfg.mc_samples
    exact = kl_gaussian_gaussian(mu1, S1, mu2, S2).value
    mc = kl_monte_carlo(gaussian_sampler(mu1, S1), gaussian_log_pdf(mu1, S1), gaussian_log_pdf(mu2, S2), N, rng)
    nu = float(rng.uniform(0.5, 10.0))
    phi2 = float(np.exp(rng.uniform(np.log(1e-3), np.log(2.0))))
    Sq = phi2 * np.eye(n)
    t_bound = kl_gaussian_t_upper(mu1, Sq, mu2, S2, nu).value
    t_mc = kl_monte_carlo(gaussian_sampler(mu1, Sq), gaussian_log_pdf(mu1, Sq), t_log_pdf(mu2, S2, nu), N, rng)
    m, v, beta = float(rng.normal(0, 2)), float(np.exp(rng.uniform(-3, 1))), float(np.exp(rng.uniform(-1, 1)))
    lap_bound = kl_gaussian_laplace_upper(m, v, beta).value
    lap_exact = kl_gaussian_laplace_quadrature(m, v, beta).value
    return [dict(
        instance=i, n=n,
        gauss_exact=exact, gauss_mc=mc.value, gauss_se=mc.standard_error,
        gauss_pass=bool(abs(exact - mc.value) <= 3.0 * mc.standard_error),
        t_nu=nu, t_phi2=phi2, t_bound=t_bound, t_mc=t_mc.value, t_se=t_mc.standard_error,
        t_pass=bool(t_bound >= t_mc.value - 3.0 * t_mc.standard_error),
        laplace_mu=m, laplace_var=v, laplace_beta=beta, laplace_bound=lap_bound, laplace_exact=lap_exact,
        laplace_pass=bool(lap_bound >= lap_exact - 1e-9),
    )]


RUNNERS = {
    "bound_table": (_bound_table, lambda cfg: [0]),
    "regret_vs_bound": (_regret_vs_bound, lambda cfg: list(range(cfg.replicates))),
    "hier_vs_flat": (_hier_vs_flat, lambda cfg: [0]),
    "sparsity_sweep": (_sparsity_sweep, lambda cfg: [0]),
    "risk_coverage": (_risk_coverage, _risk_tasks),
    "kl_verification": (_kl_verification, lambda cfg: list(range(cfg.num_instances))),
}


def _run_task(cfg_dict, task):
    cfg = parse_config(cfg_dict)
    fn, _ = RUNNERS[cfg.kind]
    try:
        return fn(cfg, task)
    except DomainError as exc:
        raise DomainError(f"replicate {task}: {exc}") from exc


# -- aggregation -----------------------------------------------------------------


def compute_aggregates(kind, records):
    """Summary statistics, always recomputed from the per-replicate records."""
    if kind == "regret_vs_bound":
        out = {}
        for T in sorted({r["T"] for r in records}):
            rs = [r for r in records if r["T"] == T]
            out[str(T)] = {
                "replicates": len(rs),
                "violations": sum(r["violation"] for r in rs),
                "mean_regret": math.fsum(r["measured_regret"] for r in rs) / len(rs),
                "mean_bound": math.fsum(r["bound_total"] for r in rs) / len(rs),
                "max_regret_minus_bound": max(r["measured_regret"] - r["bound_total"] for r in rs),
            }
        return {"by_T": out, "total_violations": sum(r["violation"] for r in records)}
    if kind == "risk_coverage":
        out = {}
        for g in sorted({r["grid_index"] for r in records}):
            rs = [r for r in records if r["grid_index"] == g]
            out[str(g)] = {
                "kappa": rs[0]["kappa"], "delta": rs[0]["delta"], "replicates": len(rs),
                "coverage": sum(r["covered_regret"] for r in rs) / len(rs),
                "coverage_kl": sum(r["covered_kl"] for r in rs) / len(rs),
                "regret_ge_kl": all(r["regret_bound"] >= r["kl_bound"] for r in rs),
            }
        return {"by_grid": out}
    if kind == "hier_vs_flat":
        deltas = [r["delta"] for r in records]
        signs = [d >= 0 for d in deltas]
        return {"points": len(records), "hier_wins": sum(signs),
                "sign_changes": sum(1 for a, b in zip(signs, signs[1:]) if a != b)}
    if kind == "kl_verification":
        return {key: sum(r[key] for r in records) for key in ("gauss_pass", "t_pass", "laplace_pass")} | {
            "instances": len(records)}
    if kind == "sparsity_sweep":
        return {"points": len(records)}
    return {"rows": len(records)}


# -- orchestration -------------------------------------------------------------------


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc):
    return json.dumps(_plain(doc), sort_keys=True, indent=1, allow_nan=False) + "\n"


def run_records(cfg: ExperimentConfig, workers=1):
    fn, tasks_of = RUNNERS[cfg.kind]
    tasks = tasks_of(cfg)
    cfg_dict = cfg.echo()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_run_task, [cfg_dict] * len(tasks), tasks))
    else:
        chunks = [_run_task(cfg_dict, t) for t in tasks]
    records = [_plain(r) for chunk in chunks for r in chunk]
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "kind": cfg.kind,
        "config": cfg_dict,
        "records": records,
        "aggregates": _plain(compute_aggregates(cfg.kind, records)),
    }


def resolve_output_dir(cfg, output_dir=None):
    if output_dir is not None:
        return Path(output_dir)
    env = os.environ.get("HIERREGRET_OUTPUT_DIR")
    return Path(env) if env else Path(cfg.output_dir)


def resolve_workers(workers=None):
    if workers is not None:
        return int(workers)
    env = os.environ.get("HIERREGRET_WORKERS")
    return int(env) if env else 1


def run_experiment(cfg: ExperimentConfig, output_dir=None, workers=None):
    """Run ``cfg``; write ``<kind>_records.json`` and its default plot files.

    Returns ``(document, written_paths)``.
    """
    doc = run_records(cfg, resolve_workers(workers))
    out = resolve_output_dir(cfg, output_dir)
    path = out / f"{cfg.kind}_records.json"
    _atomic_write(path, dumps(doc))
    paths = [path]
    if doc["records"]:
        plot_kind = DEFAULT_PLOTS[cfg.kind]
        paths += write_plot_files(emit_plot_data(doc, plot_kind), out, plot_kind)
    return doc, paths


# -- plot data -------------------------------------------------------------------


def _mean_by(records, key, value):
    groups = {}
    for r in records:
        groups.setdefault(r[key], []).append(r[value])
    return [(k, math.fsum(v) / len(v)) for k, v in sorted(groups.items())]


def emit_plot_data(doc, kind):
    """Columnar series ``{name: {"columns": [...], "rows": [...]}}`` for a plot kind."""
    if kind not in PLOT_KINDS:
        raise DomainError(f"unknown plot kind {kind!r}; choose from {sorted(PLOT_KINDS)}")
    records = doc.get("records") or []
    if not records:
        raise DomainError("the record set is empty")
    if doc.get("kind") != PLOT_KINDS[kind]:
        raise DomainError(f"plot kind {kind!r} needs records from {PLOT_KINDS[kind]!r}, got {doc.get('kind')!r}")
    series = {}
    if kind == "regret_vs_T":
        for n in sorted({r["n"] for r in records}):
            rs = [r for r in records if r["n"] == n]
            series[f"regret_n{n}"] = {"columns": ["T", "value"], "rows": _mean_by(rs, "T", "measured_regret")}
            series[f"bound_n{n}"] = {"columns": ["T", "value"], "rows": _mean_by(rs, "T", "bound_total")}
    elif kind == "delta_vs_separation":
        rows = sorted((r["separation"], r["delta"]) for r in records)
        series["delta"] = {"columns": ["separation", "value"], "rows": rows}
    elif kind == "bound_vs_nu":
        rows = sorted((r["nu"], r["bound_total"]) for r in records if "nu" in r)
        if not rows:
            raise DomainError("bound_table records contain no nu sweep")
        series["mvt"] = {"columns": ["nu", "value"], "rows": rows}
        g = [r for r in records if r["family"] == "iso_gaussian"]
        if g:
            series["gaussian"] = {"columns": ["nu", "value"], "rows": [(nu, g[0]["bound_total"]) for nu, _ in rows]}
    elif kind == "coverage_vs_delta":
        for kappa in sorted({r["kappa"] for r in records}):
            rs = [r for r in records if r["kappa"] == kappa]
            groups = {}
            for r in rs:
                groups.setdefault(r["delta"], []).append(r["covered_regret"])
            series[f"kappa_{kappa:g}"] = {"columns": ["delta", "value"],
                                          "rows": [(d, sum(v) / len(v)) for d, v in sorted(groups.items())]}
    elif kind == "bound_vs_n":
        series["fixed_p"] = {"columns": ["n", "value"], "rows": [(r["n"], r["bound_fixed_p"]) for r in records]}
        series["scaled_p"] = {"columns": ["n", "value"], "rows": [(r["n"], r["bound_q"]) for r in records]}
    elif kind == "kl_check":
        series["gaussian_gaussian"] = {"columns": ["instance", "closed_form", "monte_carlo", "standard_error"],
                                       "rows": [(r["instance"], r["gauss_exact"], r["gauss_mc"], r["gauss_se"])
                                                for r in records]}
        series["gaussian_t"] = {"columns": ["instance", "bound", "monte_carlo", "standard_error"],
                                "rows": [(r["instance"], r["t_bound"], r["t_mc"], r["t_se"]) for r in records]}
        series["gaussian_laplace"] = {"columns": ["instance", "bound", "quadrature"],
                                      "rows": [(r["instance"], r["laplace_bound"], r["laplace_exact"])
                                               for r in records]}
    return series


def write_plot_files(series, out_dir, prefix):
    out_dir = Path(out_dir)
    paths = []
    for name, table in series.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        path = out_dir / f"{prefix}__{name}.csv"
        _atomic_write(path, buf.getvalue())
        paths.append(path)
    return paths


def load_records(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DomainError(f"unsupported records schema {doc.get('schema_version')!r}")
    return doc
