"""Bayesian online learning with hierarchical priors: regret and risk bounds.

The package is organised by concern:

- :mod:`hierregret.likelihoods` -- GLM / multi-class logistic losses and smoothness constants
- :mod:`hierregret.priors` -- prior families, densities, sampling, covariance construction
- :mod:`hierregret.divergences` -- closed-form KL divergences, KL upper bounds, MC oracle
- :mod:`hierregret.bounds` -- regret bound evaluators and variational objectives
- :mod:`hierregret.online` -- the Bayesian model-average learner (exact and SMC paths)
- :mod:`hierregret.comparator` -- best-in-hindsight comparators and measured regret
- :mod:`hierregret.risk` -- PAC-Bayes risk bounds and coverage experiments
- :mod:`hierregret.harness` / :mod:`hierregret.cli` -- config-driven experiment runner
"""

from .exceptions import A2ViolationError, ConfigError, DomainError

__version__ = "0.1.0"

__all__ = ["A2ViolationError", "ConfigError", "DomainError", "__version__"]
