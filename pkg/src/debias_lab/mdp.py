"""Two-stage exploration MDP: Intermediate (noisy), Uniform (exact) or no exploration.

Stage 1 runs one active-debiasing round with the chosen exploration action and
updates the estimates; stage 2 classifies with the refreshed threshold and never
explores.  Costs come at two levels per error type (``L1h``/``L1l`` for missed
qualified agents, ``L2h``/``L2l`` for admitted unqualified ones).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dist_core import DomainError, cdf
from .engine import (
    ActiveDebiasing,
    Decision,
    EngineConfig,
    ExploreAction,
    accumulate,
    decide,
    derive_rng,
    UpdateStrategy,
    init_state,
    update_mirrored,
    update_rate_balanced,
)
from .dataio import synth_stream
from .policy import FixedDecay, GroupModel, OrderingError, Population, optimal_threshold

__all__ = [
    "ExplorationAction",
    "MdpCostParams",
    "StageOutcome",
    "ActionSummary",
    "ComparisonReport",
    "expected_miss_cost",
    "expected_exp_cost",
    "theorem5_condition",
    "simulate_two_stage",
    "compare_actions",
]

_GROUP = "a"


class ExplorationAction(str, enum.Enum):
    INTERMEDIATE = "intermediate"
    UNIFORM = "uniform"
    NO_EXPLORE = "none"


@dataclass(frozen=True)
class MdpCostParams:
    L1h: float
    L1l: float
    L2h: float
    L2l: float
    gamma: float
    N1: int
    N2: int
    eps: float = 1.0

    def __post_init__(self):
        if not self.L1l < self.L1h:
            raise DomainError("need L1l < L1h")
        if not self.L2l < self.L2h:
            raise DomainError("need L2l < L2h")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError("gamma must be in [0, 1]")
        if not 0.0 <= self.eps <= 1.0:
            raise DomainError("eps must be in [0, 1]")
        if self.N1 <= 0 or self.N2 <= 0:
            raise DomainError("stage sizes must be positive")


@dataclass(frozen=True)
class StageOutcome:
    action: ExplorationAction
    exp_cost: float
    miss_cost_1: float
    miss_cost_2: float
    theta_1: float
    theta_2: float
    abs_gap: float

    @property
    def total(self) -> float:
        return self.exp_cost + self.miss_cost_1 + self.miss_cost_2


def expected_miss_cost(theta_hat: float, truth: GroupModel, costs: MdpCostParams, n: int) -> float:
    a0, a1 = truth.alpha
    f1 = cdf(truth.dists[1], theta_hat)
    f0 = cdf(truth.dists[0], theta_hat)
    return n * (costs.L1h * a1 * f1 + costs.L2h * a0 * (1.0 - f0))


def expected_exp_cost(
    action: ExplorationAction,
    theta_hat: float,
    lb: float,
    costs: MdpCostParams,
    truth: GroupModel,
    n: int,
    eps: float | None = None,
) -> float:
    if lb > theta_hat:
        raise OrderingError(f"lb={lb} above theta={theta_hat}")
    action = ExplorationAction(action)
    if action == ExplorationAction.NO_EXPLORE:
        return 0.0
    eps = costs.eps if eps is None else eps
    a0, a1 = truth.alpha
    mass1 = cdf(truth.dists[1], theta_hat) - cdf(truth.dists[1], lb)
    mass0 = cdf(truth.dists[0], theta_hat) - cdf(truth.dists[0], lb)
    if action == ExplorationAction.UNIFORM:
        return n * (-costs.L1h * eps * a1 * mass1 + costs.L2h * eps * a0 * mass0)
    return n * (
        (-costs.L1h + costs.L1l) * eps * a1 * mass1
        + costs.L2l * (1.0 - costs.gamma) * eps * a0 * mass0
    )


def theorem5_condition(costs: MdpCostParams, alpha0: float, alpha1: float) -> bool:
    """(1 - N2/N1)(L2h a0 - L1h a1) >= L2l (1 - gamma) a0."""
    lhs = (1.0 - costs.N2 / costs.N1) * (costs.L2h * alpha0 - costs.L1h * alpha1)
    return lhs >= costs.L2l * (1.0 - costs.gamma) * alpha0


def _single(model: GroupModel) -> Population:
    return Population({_GROUP: model})


def _stage_arrivals(truth: GroupModel, n: int, seed: int, stage: int):
    return synth_stream(_single(truth), n, seed, run_index=stage)


def _miss_cost(x, y, theta, costs: MdpCostParams) -> float:
    missed = np.sum((y == 1) & (x < theta))
    wrong = np.sum((y == 0) & (x >= theta))
    return float(costs.L1h * missed + costs.L2h * wrong)


def simulate_two_stage(
    action: ExplorationAction,
    init: GroupModel,
    truth: GroupModel,
    costs: MdpCostParams,
    seed: int,
    strategy: UpdateStrategy = UpdateStrategy.RATE_BALANCED,
) -> StageOutcome:
    """One replication; arrivals and exploration draws depend only on ``seed``."""
    action = ExplorationAction(action)
    explore = ExploreAction.INTERMEDIATE if action == ExplorationAction.INTERMEDIATE else ExploreAction.UNIFORM
    config = EngineConfig(
        variant=ActiveDebiasing(UpdateStrategy(strategy)),
        initial=_single(init),
        schedule=FixedDecay(eps0=1.0, step=0.0, eps_min=1.0),
        batch_min=1,
        action=explore,
        gamma=costs.gamma,
    )
    state = init_state(config, seed)
    state.policy.epsilon = 0.0 if action == ExplorationAction.NO_EXPLORE else costs.eps
    theta_1 = state.policy.theta[_GROUP]

    stage1 = _stage_arrivals(truth, costs.N1, seed, 1)
    exp_cost = 0.0
    for arrival in stage1:
        record = decide(state, arrival)
        if record.decision == Decision.EXPLORE:
            if arrival.y_true == 1:
                exp_cost -= costs.L1h if action == ExplorationAction.UNIFORM else costs.L1h - costs.L1l
            elif action == ExplorationAction.UNIFORM:
                exp_cost += costs.L2h
            elif not record.noisy:
                exp_cost += costs.L2l
        accumulate(state, record)
    miss_1 = _miss_cost(stage1.x, stage1.y, theta_1, costs)

    if UpdateStrategy(strategy) == UpdateStrategy.MIRRORED_WINDOW:
        update_mirrored(state)
    else:
        update_rate_balanced(state)
    theta_2 = optimal_threshold(state.est[_GROUP])
    stage2 = _stage_arrivals(truth, costs.N2, seed, 2)
    miss_2 = _miss_cost(stage2.x, stage2.y, theta_2, costs)
    theta_star = optimal_threshold(truth)
    return StageOutcome(action, exp_cost, miss_1, miss_2, theta_1, theta_2, abs(theta_star - theta_2))


@dataclass(frozen=True)
class ActionSummary:
    action: ExplorationAction
    n: int
    mean: dict[str, float]
    se: dict[str, float]


@dataclass(frozen=True)
class ComparisonReport:
    summaries: dict[ExplorationAction, ActionSummary]
    outcomes: dict[ExplorationAction, list[StageOutcome]]
    theorem5_condition: bool
    # paired (common random numbers) differences, Intermediate minus Uniform
    gap_diff_mean: float
    gap_diff_se: float
    total_diff_mean: float
    total_diff_se: float

    @property
    def theorem4_ordering(self) -> bool:
        """Sample mean |theta* - theta_2| no larger under Uniform than Intermediate."""
        return self.gap_diff_mean >= 0.0

    @property
    def theorem5_ordering(self) -> bool | None:
        """Intermediate's mean total cost no larger than Uniform's; None when the condition fails."""
        if not self.theorem5_condition:
            return None
        return self.total_diff_mean <= 0.0


FIELDS = ("exp_cost", "miss_cost_1", "miss_cost_2", "total", "abs_gap")


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def compare_actions(
    init: GroupModel,
    truth: GroupModel,
    costs: MdpCostParams,
    replications: int,
    seed: int = 0,
    strategy: UpdateStrategy = UpdateStrategy.RATE_BALANCED,
    actions=(ExplorationAction.UNIFORM, ExplorationAction.INTERMEDIATE, ExplorationAction.NO_EXPLORE),
) -> ComparisonReport:
    """Replicate every action on the same seeds and summarize costs and gaps."""
    if replications < 1:
        raise DomainError("replications must be positive")
    seeds = [int(derive_rng(seed, i, 7).integers(2**63 - 1)) for i in range(replications)]
    outcomes = {
        ExplorationAction(a): [simulate_two_stage(a, init, truth, costs, s, strategy) for s in seeds]
        for a in actions
    }
    summaries = {}
    for a, outs in outcomes.items():
        mean, se = {}, {}
        for f in FIELDS:
            mean[f], se[f] = _mean_se([getattr(o, f) for o in outs])
        summaries[a] = ActionSummary(a, len(outs), mean, se)

    u = outcomes.get(ExplorationAction.UNIFORM)
    i = outcomes.get(ExplorationAction.INTERMEDIATE)
    if u and i:
        gm, gs = _mean_se([oi.abs_gap - ou.abs_gap for oi, ou in zip(i, u)])
        tm, ts = _mean_se([oi.total - ou.total for oi, ou in zip(i, u)])
    else:
        gm = gs = tm = ts = math.nan
    a0, a1 = truth.alpha
    return ComparisonReport(summaries, outcomes, theorem5_condition(costs, a0, a1), gm, gs, tm, ts)
