"""Bounded-exploration debiasing of threshold classifiers under censored feedback."""

from .dist_core import BetaAlpha, DistEstimate, DomainError, GaussianLocation, make_estimate
from .engine import (
    ActiveDebiasing,
    EngineConfig,
    ExploitationOnly,
    PureExploration,
    UpdateStrategy,
    run,
)
from .policy import (
    Adaptive,
    EqualOpportunity,
    FixedDecay,
    GroupModel,
    NoFairness,
    Population,
    SameDecisionRule,
    compute_policy,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveDebiasing",
    "Adaptive",
    "BetaAlpha",
    "DistEstimate",
    "DomainError",
    "EngineConfig",
    "EqualOpportunity",
    "ExploitationOnly",
    "FixedDecay",
    "GaussianLocation",
    "GroupModel",
    "NoFairness",
    "Population",
    "PureExploration",
    "SameDecisionRule",
    "UpdateStrategy",
    "compute_policy",
    "make_estimate",
    "run",
]
