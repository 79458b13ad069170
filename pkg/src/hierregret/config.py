"""Declarative experiment configuration (YAML or JSON), schema version 1."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import likelihoods as lk
from . import priors as pr
from .exceptions import ConfigError

SCHEMA_VERSION = 1
KINDS = ("bound_table", "regret_vs_bound", "hier_vs_flat", "sparsity_sweep", "risk_coverage", "kl_verification")
PRIOR_FAMILIES = ("iso_gaussian", "multivariate_t", "hier_one_level", "hier_two_level", "spike_slab", "laplace")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LikelihoodConfig(_Strict):
    family: Literal["gaussian", "binary_logistic", "multiclass_logistic"] = "gaussian"
    noise_variance: float = Field(1.0, gt=0)
    num_classes: Optional[int] = Field(None, ge=2)

    @model_validator(mode="after")
    def _classes(self):
        if self.family == "multiclass_logistic" and self.num_classes is None:
            raise ValueError("multiclass_logistic needs num_classes")
        if self.family != "multiclass_logistic" and self.num_classes is not None:
            raise ValueError("num_classes only applies to multiclass_logistic")
        return self

    def build(self):
        if self.family == "gaussian":
            return lk.GaussianRegression(self.noise_variance)
        if self.family == "binary_logistic":
            return lk.BinaryLogistic()
        return lk.MultiClassLogistic(self.num_classes)


class PriorConfig(_Strict):
    family: Literal[PRIOR_FAMILIES] = "iso_gaussian"
    variance: float = Field(1.0, gt=0)  # isotropic / slab / per-class variance
    df: Optional[float] = Field(None, gt=0)
    hyper_variance: float = Field(1.0, ge=0)
    top_variance: float = Field(1.0, ge=0)
    superclass_variance: float = Field(1.0, ge=0)
    superclass_of: Optional[List[int]] = None
    p: Optional[float] = Field(None, gt=0, lt=1)
    q: Optional[float] = Field(None, gt=0, lt=1)
    scale: float = Field(1.0, gt=0)  # Laplace scale

    @model_validator(mode="after")
    def _family_fields(self):
        if self.family == "multivariate_t" and self.df is None:
            raise ValueError("multivariate_t needs df")
        if self.family == "spike_slab" and (self.p is None) == (self.q is None):
            raise ValueError("spike_slab needs exactly one of p or q")
        if self.family == "hier_two_level" and not self.superclass_of:
            raise ValueError("hier_two_level needs superclass_of")
        return self

    def build(self, n, K=1):
        f = self.family
        if f == "iso_gaussian":
            return pr.IsoGaussian(self.variance, n)
        if f == "multivariate_t":
            return pr.MultivariateT(self.df, self.variance, n)
        if f == "hier_one_level":
            return pr.HierGaussOneLevel(self.hyper_variance, self.variance, K, n)
        if f == "hier_two_level":
            return pr.HierGaussTwoLevel(self.top_variance, self.superclass_variance, self.variance,
                                        tuple(self.superclass_of), n)
        if f == "spike_slab":
            if self.q is not None:
                return pr.SpikeSlab.from_q(self.q, self.variance, n)
            return pr.SpikeSlab(self.p, self.variance, n)
        return pr.Laplace(self.scale, n)


class DataConfig(_Strict):
    label_mechanism: Literal["draw_from_model", "fixed"] = "draw_from_model"
    theta_true: Optional[List[float]] = None
    source_schedule: Literal["alternating", "blocked", "random"] = "alternating"
    source_weights: Optional[List[float]] = None

    @model_validator(mode="after")
    def _theta(self):
        if self.label_mechanism == "fixed" and self.theta_true is None:
            raise ValueError("label_mechanism 'fixed' needs theta_true")
        return self


class ExperimentConfig(_Strict):
    schema_version: Literal[1]
    kind: Literal[KINDS]
    seed: int = Field(..., ge=0)
    likelihood: LikelihoodConfig = LikelihoodConfig()
    prior: PriorConfig = PriorConfig()
    data: DataConfig = DataConfig()
    n: int = Field(1, ge=1)
    K: int = Field(1, ge=1)
    T: int = Field(10, ge=0)
    T_values: Optional[List[int]] = None
    T_per_source: Optional[List[int]] = None
    replicates: int = Field(1, ge=1)
    c: Optional[float] = Field(None, gt=0)
    method: Literal["auto", "exact", "smc"] = "auto"
    num_particles: int = Field(4096, ge=16)
    families: List[Literal[PRIOR_FAMILIES]] = list(PRIOR_FAMILIES)
    nu_values: Optional[List[float]] = None
    separation_values: Optional[List[float]] = None
    base_norm: float = Field(1.0, ge=0)
    mode: Literal["sequential", "simultaneous"] = "sequential"
    n_values: Optional[List[int]] = None
    support_size: int = Field(1, ge=0)
    coefficient: float = 1.0
    kappa_values: List[float] = [1.0]
    delta_values: List[float] = [0.05]
    test_points: int = Field(100_000, ge=100)
    num_instances: int = Field(50, ge=1)
    mc_samples: int = Field(1_000_000, ge=1000)
    output_dir: str = "results"

    @model_validator(mode="after")
    def _consistency(self):
        hier = self.prior.family in ("hier_one_level", "hier_two_level")
        if self.prior.family == "hier_two_level" and len(self.prior.superclass_of) != self.K:
            raise ValueError("prior.superclass_of must list one superclass per source (length K)")
        if self.likelihood.family == "multiclass_logistic" and hier and self.K != self.likelihood.num_classes:
            raise ValueError("for multi-class models the sources are the classes: K must equal num_classes")
        if self.data.theta_true is not None:
            expected = self.n * (self.K if (hier or self.likelihood.family == "multiclass_logistic") else 1)
            if self.likelihood.family == "multiclass_logistic":
                expected = self.n * self.likelihood.num_classes
            if len(self.data.theta_true) != expected:
                raise ValueError(f"data.theta_true must have {expected} entries")
        if self.T_per_source is not None and len(self.T_per_source) != self.K:
            raise ValueError("T_per_source must have K entries")
        if self.data.source_weights is not None and len(self.data.source_weights) != self.K:
            raise ValueError("data.source_weights must have K entries")
        if self.T_values is not None and any(t < 0 for t in self.T_values):
            raise ValueError("T_values must be nonnegative")
        if self.kind == "hier_vs_flat":
            if self.K != 2 and self.separation_values is not None:
                raise ValueError("the separation sweep is defined for K = 2")
            if self.prior.family != "hier_one_level":
                raise ValueError("hier_vs_flat needs prior.family = hier_one_level")
        if self.kind == "sparsity_sweep" and not self.n_values:
            raise ValueError("sparsity_sweep needs n_values")
        if self.kind == "sparsity_sweep" and self.support_size > min(self.n_values):
            raise ValueError("support_size exceeds the smallest n in n_values")
        if self.kind == "risk_coverage":
            if self.likelihood.family != "gaussian" or self.prior.family not in ("iso_gaussian", "spike_slab"):
                raise ValueError("risk_coverage needs a gaussian likelihood with an iso_gaussian or spike_slab prior")
            if any(k <= 0.5 for k in self.kappa_values):
                raise ValueError("kappa_values must exceed 1/2")
            if any(not 0 < d < 1 for d in self.delta_values):
                raise ValueError("delta_values must lie in (0, 1)")
        if self.kind == "regret_vs_bound" and self.method == "exact" and self.likelihood.family != "gaussian":
            raise ValueError("method 'exact' requires the gaussian likelihood")
        return self

    @property
    def smoothness(self):
        return self.c if self.c is not None else lk.smoothness_constant(self.likelihood.build())

    def echo(self):
        return self.model_dump(mode="json")


def _format_errors(exc: ValidationError):
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append((loc, err["msg"]))
    return out


def parse_config(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError([("<root>", "configuration must be a mapping")])
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("<file>", f"cannot read {path}: {exc}")]) from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError([("<file>", f"cannot parse {path}: {exc}")]) from None
    return parse_config(raw)
