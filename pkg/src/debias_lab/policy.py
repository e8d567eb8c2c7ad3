"""Threshold selection, exploration bounds and exploration-probability schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .dist_core import DistEstimate, DomainError, cdf, isf, quantile, sf

__all__ = [
    "GroupModel",
    "Population",
    "PopulationEstimate",
    "PopulationSpec",
    "NoFairness",
    "SameDecisionRule",
    "EqualOpportunity",
    "FairnessRule",
    "ThresholdPolicy",
    "FixedDecay",
    "Adaptive",
    "EpsilonSchedule",
    "Bound",
    "DegenerateError",
    "OrderingError",
    "misclassification",
    "optimal_threshold",
    "optimal_thresholds_fair",
    "lower_bound",
    "upper_bound",
    "exploration_bounds",
    "compute_policy",
    "next_epsilon",
    "golden_section",
]

GRID_POINTS = 2001
GOLDEN_TOL = 1e-8
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_LB_CLAMP_P = 1e-4
_UB_CLAMP_P = 1.0 - 1e-4


class DegenerateError(ValueError):
    """The misclassification objective is monotone; no interior optimum."""


class OrderingError(ValueError):
    """Threshold lies above the label-1 reference point."""


@dataclass(frozen=True)
class GroupModel:
    """Label-conditional feature distributions of one group.

    ``dists[y]`` is the distribution of label ``y``; ``alpha1`` the fraction of
    label-1 agents.  ``weight`` is the group's share of arrivals and only
    matters when generating data.
    """

    dists: tuple[DistEstimate, DistEstimate]
    alpha1: float
    weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha1 <= 1.0:
            raise DomainError(f"alpha1 must be in [0, 1], got {self.alpha1}")
        if self.weight < 0:
            raise DomainError("group weight must be nonnegative")

    @property
    def alpha(self) -> tuple[float, float]:
        return (1.0 - self.alpha1, self.alpha1)

    def with_dist(self, label: int, dist: DistEstimate) -> "GroupModel":
        dists = list(self.dists)
        dists[label] = dist
        return GroupModel((dists[0], dists[1]), self.alpha1, self.weight)


@dataclass(frozen=True)
class Population:
    """Per-group, per-label distributions (either the truth or an estimate)."""

    groups: Mapping[str, GroupModel]

    def __post_init__(self):
        if not self.groups:
            raise DomainError("population needs at least one group")
        object.__setattr__(self, "groups", dict(self.groups))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.groups)

    def __getitem__(self, g: str) -> GroupModel:
        return self.groups[g]

    def replace(self, g: str, model: GroupModel) -> "Population":
        groups = dict(self.groups)
        groups[g] = model
        return Population(groups)

    def omega(self, g: str, y: int) -> float:
        return self.groups[g].dists[y].omega


PopulationEstimate = Population
PopulationSpec = Population


@dataclass(frozen=True)
class NoFairness:
    pass


@dataclass(frozen=True)
class SameDecisionRule:
    pass


@dataclass(frozen=True)
class EqualOpportunity:
    slack: float = 0.0

    def __post_init__(self):
        if self.slack < 0:
            raise DomainError("slack must be nonnegative")


FairnessRule = NoFairness | SameDecisionRule | EqualOpportunity


@dataclass
class ThresholdPolicy:
    theta: dict[str, float]
    lb: dict[str, float]
    ub: dict[str, float]
    epsilon: float
    lb_clamped: dict[str, bool] = field(default_factory=dict)
    ub_clamped: dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class FixedDecay:
    """Subtract ``step`` from ``eps0`` after every ``every`` observed samples."""

    eps0: float = 0.5
    step: float = 0.1
    every: int = 10000
    eps_min: float = 0.01
    eps_max: float = 1.0

    def __post_init__(self):
        _check_eps_bounds(self.eps0, self.eps_min, self.eps_max)
        if self.every <= 0:
            raise DomainError("every must be positive")


@dataclass(frozen=True)
class Adaptive:
    """Exploration proportional to the observed-vs-expected error discrepancy."""

    eps0: float = 0.5
    gain: float = 1.0
    window: int = 1000
    eps_min: float = 0.01
    eps_max: float = 1.0

    def __post_init__(self):
        _check_eps_bounds(self.eps0, self.eps_min, self.eps_max)
        if not self.gain > 0:
            raise DomainError("gain must be positive")
        if self.window <= 0:
            raise DomainError("window must be positive")


EpsilonSchedule = FixedDecay | Adaptive


def _check_eps_bounds(eps0, eps_min, eps_max):
    if not 0.0 < eps_min <= eps0 <= eps_max <= 1.0:
        raise DomainError(
            f"need 0 < eps_min <= eps0 <= eps_max <= 1, got {eps_min}, {eps0}, {eps_max}"
        )


class Bound(NamedTuple):
    value: float
    clamped: bool


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = GOLDEN_TOL):
    """Minimize a unimodal ``f`` on [a, b]; returns (x, f(x))."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _grid_then_refine(objective, lo: float, hi: float, n: int = GRID_POINTS):
    grid = np.linspace(lo, hi, n)
    values = np.asarray(objective(grid), dtype=float)
    i = int(np.argmin(values))  # first minimizer: ties go to the smallest argument
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]
    x, fx = golden_section(lambda t: float(objective(t)), a, b)
    if fx <= values[i]:
        return float(x), float(fx)
    return float(grid[i]), float(values[i])


def misclassification(model: GroupModel, theta):
    """alpha1 * F1(theta) + alpha0 * (1 - F0(theta))."""
    a0, a1 = model.alpha
    return a1 * cdf(model.dists[1], theta) + a0 * (1.0 - cdf(model.dists[0], theta))


def _search_range(models) -> tuple[float, float]:
    lows, highs = [], []
    for m in models:
        for d in m.dists:
            lows.append(quantile(d, 0.001))
            highs.append(quantile(d, 0.999))
    return min(lows), max(highs)


def _check_nondegenerate(model: GroupModel):
    if model.alpha1 in (0.0, 1.0):
        raise DegenerateError("alpha1 in {0, 1}: misclassification is monotone in theta")


def optimal_threshold(model: GroupModel) -> float:
    """Threshold minimizing the group's misclassification rate."""
    _check_nondegenerate(model)
    lo, hi = _search_range([model])
    theta, _ = _grid_then_refine(lambda t: misclassification(model, t), lo, hi)
    return theta


def _tpr(model: GroupModel, theta):
    return 1.0 - cdf(model.dists[1], theta)


def _eo_thetas(pop: Population, q):
    # common true-positive rate q -> per-group threshold
    return {g: quantile(m.dists[1], 1.0 - q) for g, m in pop.groups.items()}


def _eo_objective(pop: Population, q, shift: Mapping[str, float] | None = None):
    total = 0.0
    for g, m in pop.groups.items():
        qg = q + (shift.get(g, 0.0) if shift else 0.0)
        qg = np.clip(qg, 1e-12, 1.0 - 1e-12)
        total = total + misclassification(m, quantile(m.dists[1], 1.0 - qg))
    return total


def _solve_eo(pop: Population, shift: Mapping[str, float] | None = None) -> dict[str, float]:
    lo, hi = 0.0005, 0.9995
    if shift:
        # keep every shifted rate strictly inside (0, 1)
        lo = max(lo, lo - min(shift.values()))
        hi = min(hi, hi - max(shift.values()))
    q, _ = _grid_then_refine(lambda q: _eo_objective(pop, q, shift), lo, hi)
    out = {}
    for g, m in pop.groups.items():
        qg = q + (shift.get(g, 0.0) if shift else 0.0)
        out[g] = float(quantile(m.dists[1], 1.0 - qg))
    return out


def optimal_thresholds_fair(pop: Population, rule: FairnessRule) -> dict[str, float]:
    """Per-group thresholds minimizing summed misclassification under ``rule``."""
    for m in pop.groups.values():
        _check_nondegenerate(m)

    if isinstance(rule, NoFairness) or len(pop.groups) == 1:
        return {g: optimal_threshold(m) for g, m in pop.groups.items()}

    if isinstance(rule, SameDecisionRule):
        lo, hi = _search_range(pop.groups.values())

        def total(t):
            return sum(misclassification(m, t) for m in pop.groups.values())

        theta, _ = _grid_then_refine(total, lo, hi)
        return {g: theta for g in pop.groups}

    if isinstance(rule, EqualOpportunity):
        if rule.slack > 0:
            free = {g: optimal_threshold(m) for g, m in pop.groups.items()}
            rates = {g: float(_tpr(pop[g], t)) for g, t in free.items()}
            if max(rates.values()) - min(rates.values()) <= rule.slack:
                return free
            if len(pop.groups) != 2:
                raise NotImplementedError("relaxed equal opportunity supports two groups")
            # with a single violated constraint the optimum sits on the band edge
            ga, gb = pop.names
            sign = 1.0 if rates[gb] > rates[ga] else -1.0
            return _solve_eo(pop, {ga: 0.0, gb: sign * rule.slack})
        return _solve_eo(pop)

    raise TypeError(f"unknown fairness rule {rule!r}")


def _mirror_point(est: DistEstimate, theta: float) -> tuple[float, float, float]:
    """Return (arg, comp, x) with arg = 2 F(omega) - F(theta), comp = 1 - arg.

    Both forms are evaluated on the side that avoids cancellation, and ``x``
    inverts through whichever of them is smaller.
    """
    p = est.tau / 100.0
    f_theta = float(cdf(est, theta))
    if f_theta > 0.5:
        s_theta = float(sf(est, theta))
        arg = (2.0 * p - 1.0) + s_theta
        comp = (1.0 - 2.0 * p) + (1.0 - s_theta)
    else:
        arg = 2.0 * p - f_theta
        comp = (1.0 - 2.0 * p) + f_theta
    if arg <= 0.0 or comp <= 0.0:
        return arg, comp, math.nan
    x = float(quantile(est, arg)) if arg <= 0.5 else float(isf(est, comp))
    return arg, comp, x


def lower_bound(est0: DistEstimate, theta: float) -> Bound:
    """Exploration lower bound making omega_hat the median of (lb, theta)."""
    arg, comp, x = _mirror_point(est0, theta)
    if arg <= 0.0:
        return Bound(float(quantile(est0, _LB_CLAMP_P)), True)
    if comp <= 0.0:
        return Bound(float(quantile(est0, _UB_CLAMP_P)), True)
    return Bound(x, False)


def upper_bound(est1: DistEstimate, theta: float) -> Bound:
    """Mirror of :func:`lower_bound` for the label-1 window (theta, ub)."""
    if theta > est1.omega:
        raise OrderingError(f"theta={theta} exceeds label-1 reference point {est1.omega}")
    arg, comp, x = _mirror_point(est1, theta)
    if comp <= 0.0:
        return Bound(float(quantile(est1, _UB_CLAMP_P)), True)
    if arg <= 0.0:
        return Bound(float(quantile(est1, _LB_CLAMP_P)), True)
    return Bound(x, False)


def exploration_bounds(model: GroupModel, theta: float) -> tuple[Bound, Bound]:
    """Both window bounds for a group, forced to satisfy lb <= theta <= ub.

    A threshold outside [omega0_hat, omega1_hat] collapses the offending
    window to the threshold itself and flags it as clamped.
    """
    lb = lower_bound(model.dists[0], theta)
    if lb.value > theta:
        lb = Bound(theta, True)
    try:
        ub = upper_bound(model.dists[1], theta)
    except OrderingError:
        ub = Bound(theta, True)
    if ub.value < theta:
        ub = Bound(theta, True)
    return lb, ub


def compute_policy(
    pop: Population, rule: FairnessRule, epsilon: float
) -> ThresholdPolicy:
    thetas = optimal_thresholds_fair(pop, rule)
    policy = ThresholdPolicy(theta=thetas, lb={}, ub={}, epsilon=epsilon)
    for g, theta in thetas.items():
        lb, ub = exploration_bounds(pop[g], theta)
        policy.lb[g], policy.lb_clamped[g] = lb
        policy.ub[g], policy.ub_clamped[g] = ub
    return policy


def next_epsilon(
    schedule: EpsilonSchedule, observed: int, err_obs: float = 0.0, err_exp: float = 0.0
) -> float:
    if observed < 0 or err_obs < 0 or err_exp < 0:
        raise DomainError("counts must be nonnegative")
    if isinstance(schedule, FixedDecay):
        eps = schedule.eps0 - schedule.step * (observed // schedule.every)
    else:
        eps = schedule.gain * abs(err_obs - err_exp) / max(err_exp, 1.0)
    return float(min(max(eps, schedule.eps_min), schedule.eps_max))
