"""Active debiasing loop and its exploitation-only / pure-exploration baselines.

One round: compute thresholds, bounds and the exploration probability from the
current estimates; admit arrivals (exploit above the threshold, explore inside
the window with probability epsilon); once every (group, label) batch holds at
least ``batch_min`` labelled records, update the estimates and start over.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .dist_core import DistEstimate, DomainError, cdf, solve_param_for_percentile
from .policy import (
    Adaptive,
    EpsilonSchedule,
    FairnessRule,
    FixedDecay,
    NoFairness,
    Population,
    ThresholdPolicy,
    compute_policy,
    next_epsilon,
)

__all__ = [
    "UpdateStrategy",
    "ExploreAction",
    "ActiveDebiasing",
    "ExploitationOnly",
    "PureExploration",
    "AlgorithmVariant",
    "Decision",
    "AgentArrival",
    "Arrivals",
    "DecisionRecord",
    "EngineConfig",
    "EngineState",
    "TrajectoryPoint",
    "Trajectory",
    "UniformTape",
    "derive_rng",
    "init_state",
    "decide",
    "accumulate",
    "ready_to_update",
    "update",
    "update_estimates",
    "finish_round",
    "update_mirrored",
    "update_rate_balanced",
    "update_exploitation_only",
    "update_pure_exploration",
    "run",
    "MIN_WINDOW_POINTS",
]

MIN_WINDOW_POINTS = 3

# stream ids under one (seed, run index)
ARRIVAL_STREAM = 0
EXPLORE_STREAM = 1
NOISE_STREAM = 2
KEEP_STREAM = 3


class UpdateStrategy(str, enum.Enum):
    MIRRORED_WINDOW = "mirrored"
    RATE_BALANCED = "rate_balanced"


class ExploreAction(str, enum.Enum):
    UNIFORM = "uniform"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class ActiveDebiasing:
    strategy: UpdateStrategy = UpdateStrategy.MIRRORED_WINDOW


@dataclass(frozen=True)
class ExploitationOnly:
    pass


@dataclass(frozen=True)
class PureExploration:
    pass


AlgorithmVariant = ActiveDebiasing | ExploitationOnly | PureExploration


class Decision(enum.IntEnum):
    REJECT = 0
    EXPLOIT = 1
    EXPLORE = 2


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based stream for (seed, *keys); independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


class UniformTape:
    """Python-float uniforms drawn from a generator in fixed-size blocks."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


@dataclass(frozen=True, slots=True)
class AgentArrival:
    x: float
    g: str
    y_true: int
    t: int


@dataclass(frozen=True)
class Arrivals:
    """A finite arrival sequence stored column-wise."""

    x: np.ndarray
    g: np.ndarray  # integer index into ``groups``
    y: np.ndarray
    groups: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.x) == len(self.g) == len(self.y)):
            raise DomainError("arrival columns differ in length")

    def __len__(self) -> int:
        return len(self.x)

    def __iter__(self) -> Iterator[AgentArrival]:
        names = self.groups
        for t, (x, g, y) in enumerate(zip(self.x.tolist(), self.g.tolist(), self.y.tolist())):
            yield AgentArrival(x, names[g], y, t)

    def head(self, n: int) -> "Arrivals":
        return Arrivals(self.x[:n], self.g[:n], self.y[:n], self.groups)

    @classmethod
    def from_iterable(cls, items: Iterable[AgentArrival], groups: tuple[str, ...]) -> "Arrivals":
        items = list(items)
        index = {g: i for i, g in enumerate(groups)}
        return cls(
            np.array([a.x for a in items], dtype=float),
            np.array([index[a.g] for a in items], dtype=np.int64),
            np.array([a.y_true for a in items], dtype=np.int64),
            groups,
        )


@dataclass(slots=True)
class DecisionRecord:
    arrival: AgentArrival
    decision: Decision
    action: ExploreAction | None = None
    observed_label: int | None = None  # None means censored
    noisy: bool = False
    keep_u: float = 1.0  # retention draw for rate-balanced updates

    @property
    def admitted(self) -> bool:
        return self.decision != Decision.REJECT


@dataclass
class EngineConfig:
    variant: AlgorithmVariant
    initial: Population
    schedule: EpsilonSchedule = field(default_factory=Adaptive)
    rule: FairnessRule = field(default_factory=NoFairness)
    batch_min: int = 50
    eta: float = 1.0
    action: ExploreAction = ExploreAction.UNIFORM
    gamma: float = 0.0

    def validate(self):
        if self.batch_min < 1:
            raise DomainError(f"batch_min must be >= 1, got {self.batch_min}")
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma must be in [0, 1], got {self.gamma}")
        for g, m in self.initial.groups.items():
            if not 0.0 < m.alpha1 < 1.0:
                raise DomainError(f"group {g}: alpha1 must be in (0, 1), got {m.alpha1}")


@dataclass
class BatchEntry:
    x: float
    t: int
    below_theta: bool
    keep_u: float


@dataclass
class EngineState:
    config: EngineConfig
    est: Population
    policy: ThresholdPolicy
    batches: dict[tuple[str, int], list[BatchEntry]]
    explore_tape: UniformTape
    noise_tape: UniformTape
    keep_tape: UniformTape
    t: int = 0
    arrivals_seen: int = 0
    # adaptive-epsilon bookkeeping since the last epsilon change
    err_obs: float = 0.0
    err_exp: float = 0.0
    window_arrivals: int = 0
    round_arrivals: dict[str, int] = field(default_factory=dict)
    round_fp: int = 0
    audit: list[int] | None = None

    @property
    def batch_min(self) -> int:
        return self.config.batch_min

    @property
    def variant(self) -> AlgorithmVariant:
        return self.config.variant


@dataclass
class TrajectoryPoint:
    t: int
    arrivals: int
    omega_hat: dict[tuple[str, int], float]
    psi: dict[tuple[str, int], float]
    theta: dict[str, float]
    lb: dict[str, float]
    ub: dict[str, float]
    epsilon: float
    batch_n: dict[tuple[str, int], int]
    clamped: dict[str, bool]
    est: Population = field(repr=False, compare=False)


@dataclass
class Trajectory:
    """Update-round snapshots plus the per-arrival decision log."""

    groups: tuple[str, ...]
    points: list[TrajectoryPoint]
    x: np.ndarray
    g: np.ndarray
    y: np.ndarray
    admitted: np.ndarray
    explored: np.ndarray
    observed: np.ndarray  # -1 censored, else the label the decision maker saw
    theta_dec: np.ndarray
    round_idx: np.ndarray

    def __len__(self) -> int:
        return len(self.x)

    @property
    def final(self) -> TrajectoryPoint:
        return self.points[-1]


def _initial_epsilon(config: EngineConfig) -> float:
    if isinstance(config.variant, ExploitationOnly):
        return 0.0
    return config.schedule.eps0


def init_state(config: EngineConfig, seed: int, run_index: int = 0) -> EngineState:
    config.validate()
    est = config.initial
    policy = compute_policy(est, config.rule, _initial_epsilon(config))
    batches = {(g, y): [] for g in est.names for y in (0, 1)}
    return EngineState(
        config=config,
        est=est,
        policy=policy,
        batches=batches,
        explore_tape=UniformTape(derive_rng(seed, run_index, EXPLORE_STREAM)),
        noise_tape=UniformTape(derive_rng(seed, run_index, NOISE_STREAM)),
        keep_tape=UniformTape(derive_rng(seed, run_index, KEEP_STREAM)),
        round_arrivals={g: 0 for g in est.names},
    )


def decide(state: EngineState, arrival: AgentArrival) -> DecisionRecord:
    """Admit, explore or reject one arrival under the current policy.

    Exactly one exploration draw and one noise draw are consumed per arrival so
    that runs differing only in variant or action share their randomness.
    """
    policy = state.policy
    variant = state.variant
    u_explore = state.explore_tape.next()
    u_noise = state.noise_tape.next()
    x, g = arrival.x, arrival.g
    theta = policy.theta[g]

    if x >= theta:
        return DecisionRecord(arrival, Decision.EXPLOIT, observed_label=arrival.y_true)
    if isinstance(variant, ExploitationOnly):
        return DecisionRecord(arrival, Decision.REJECT)
    if isinstance(variant, ActiveDebiasing) and x < policy.lb[g]:
        return DecisionRecord(arrival, Decision.REJECT)
    if u_explore >= policy.epsilon:
        return DecisionRecord(arrival, Decision.REJECT)

    action = state.config.action
    if action == ExploreAction.INTERMEDIATE and arrival.y_true == 0 and u_noise < state.config.gamma:
        return DecisionRecord(arrival, Decision.EXPLORE, action, observed_label=1, noisy=True)
    return DecisionRecord(arrival, Decision.EXPLORE, action, observed_label=arrival.y_true)


def accumulate(state: EngineState, record: DecisionRecord) -> None:
    """Move an admitted, labelled record into its (group, believed label) batch."""
    arrival = record.arrival
    g = arrival.g
    state.arrivals_seen += 1
    state.window_arrivals += 1
    state.round_arrivals[g] += 1
    if not record.admitted or record.observed_label is None:
        return
    record.keep_u = state.keep_tape.next()
    below = arrival.x < state.policy.theta[g]
    if not below and record.observed_label == 0:
        state.round_fp += 1
    state.batches[(g, record.observed_label)].append(
        BatchEntry(arrival.x, arrival.t, below, record.keep_u)
    )


def ready_to_update(state: EngineState) -> bool:
    return min(len(b) for b in state.batches.values()) >= state.batch_min


def _consume(state: EngineState, entries: list[BatchEntry]) -> np.ndarray:
    if state.audit is not None:
        state.audit.extend(e.t for e in entries)
    return np.array([e.x for e in entries], dtype=float)


def _move_reference(state: EngineState, g: str, y: int, target: float) -> None:
    model = state.est[g]
    old = model.dists[y]
    try:
        psi_new = solve_param_for_percentile(old.kind, old.tau, target)
    except DomainError:
        return
    eta = state.config.eta
    psi = (1.0 - eta) * old.psi + eta * psi_new
    state.est = state.est.replace(g, model.with_dist(y, old.with_psi(psi)))


def _window(state: EngineState, g: str, y: int) -> list[BatchEntry]:
    pol = state.policy
    theta = pol.theta[g]
    batch = state.batches[(g, y)]
    if y == 0:
        lo = pol.lb[g]
        return [e for e in batch if lo <= e.x < theta]
    hi = pol.ub[g]
    return [e for e in batch if theta <= e.x <= hi]


def update_mirrored(state: EngineState) -> None:
    """Move each reference point to the realized median of its window.

    Label 0 uses (lb, theta); label 1 uses the mirrored window (theta, ub).
    """
    for g in state.est.names:
        for y in (0, 1):
            inside = _window(state, g, y)
            if len(inside) < MIN_WINDOW_POINTS:
                continue
            _move_reference(state, g, y, float(np.median(_consume(state, inside))))


def _percentile_update(state: EngineState, g: str, y: int, entries: list[BatchEntry]) -> None:
    if len(entries) < MIN_WINDOW_POINTS:
        return
    values = _consume(state, entries)
    tau = state.est[g].dists[y].tau
    _move_reference(state, g, y, float(np.percentile(values, tau)))


def _rate_balanced_sets(state: EngineState):
    eps = state.policy.epsilon
    for g in state.est.names:
        for y in (0, 1):
            kept = [e for e in state.batches[(g, y)] if e.below_theta or e.keep_u < eps]
            yield g, y, kept


def update_rate_balanced(state: EngineState) -> None:
    """Percentile of explored data plus exploited data thinned to rate epsilon."""
    for g, y, kept in _rate_balanced_sets(state):
        _percentile_update(state, g, y, kept)


def update_exploitation_only(state: EngineState) -> None:
    """Naive percentile of everything admitted; ignores the truncation."""
    for g in state.est.names:
        for y in (0, 1):
            _percentile_update(state, g, y, state.batches[(g, y)])


def update_pure_exploration(state: EngineState) -> None:
    for g, y, kept in _rate_balanced_sets(state):
        _percentile_update(state, g, y, kept)


def _expected_fp_rate(est: Population, g: str, theta: float) -> float:
    model = est[g]
    return model.alpha[0] * (1.0 - cdf(model.dists[0], theta))


def _refresh_epsilon(state: EngineState, pre_update: Population) -> float:
    config = state.config
    if isinstance(config.variant, ExploitationOnly):
        return 0.0
    schedule = config.schedule
    if isinstance(schedule, FixedDecay):
        return next_epsilon(schedule, state.arrivals_seen)

    # expected label-0 admits above theta, under the estimates used this round
    for g, n in state.round_arrivals.items():
        state.err_exp += n * _expected_fp_rate(pre_update, g, state.policy.theta[g])
    state.err_obs += state.round_fp
    if state.window_arrivals < schedule.window:
        return state.policy.epsilon
    eps = next_epsilon(schedule, state.arrivals_seen, state.err_obs, state.err_exp)
    state.err_obs = state.err_exp = 0.0
    state.window_arrivals = 0
    return eps


def update_estimates(state: EngineState) -> None:
    """Stage II for the configured variant."""
    variant = state.variant
    if isinstance(variant, ActiveDebiasing):
        if variant.strategy == UpdateStrategy.MIRRORED_WINDOW:
            update_mirrored(state)
        else:
            update_rate_balanced(state)
    elif isinstance(variant, PureExploration):
        update_pure_exploration(state)
    else:
        update_exploitation_only(state)


def finish_round(state: EngineState, pre_update: Population) -> None:
    """Refresh epsilon, clear batches and recompute the policy (Stage 0)."""
    eps = _refresh_epsilon(state, pre_update)
    for b in state.batches.values():
        b.clear()
    state.round_arrivals = {g: 0 for g in state.est.names}
    state.round_fp = 0
    state.t += 1
    state.policy = compute_policy(state.est, state.config.rule, eps)


def update(state: EngineState, updater: Callable[[EngineState], None] | None = None) -> None:
    pre_update = state.est
    (updater or update_estimates)(state)
    finish_round(state, pre_update)


def _snapshot(state: EngineState, batch_n: dict[tuple[str, int], int]) -> TrajectoryPoint:
    est, pol = state.est, state.policy
    keys = [(g, y) for g in est.names for y in (0, 1)]
    return TrajectoryPoint(
        t=state.t,
        arrivals=state.arrivals_seen,
        omega_hat={k: est.omega(*k) for k in keys},
        psi={k: est[k[0]].dists[k[1]].psi for k in keys},
        theta=dict(pol.theta),
        lb=dict(pol.lb),
        ub=dict(pol.ub),
        epsilon=pol.epsilon,
        batch_n=batch_n,
        clamped={g: bool(pol.lb_clamped[g] or pol.ub_clamped[g]) for g in est.names},
        est=est,
    )


def run(
    config: EngineConfig,
    arrivals: Arrivals,
    seed: int,
    run_index: int = 0,
    audit: list[int] | None = None,
    updater: Callable[[EngineState], None] | None = None,
) -> Trajectory:
    """Play ``arrivals`` through the algorithm; deterministic in (seed, run_index)."""
    state = init_state(config, seed, run_index)
    state.audit = audit
    groups = arrivals.groups
    if set(groups) != set(state.est.names):
        raise DomainError(f"arrival groups {groups} do not match estimate groups {state.est.names}")
    n = len(arrivals)
    admitted = np.zeros(n, dtype=bool)
    explored = np.zeros(n, dtype=bool)
    observed = np.full(n, -1, dtype=np.int8)
    theta_dec = np.empty(n)
    round_idx = np.empty(n, dtype=np.int64)
    points = [_snapshot(state, {k: 0 for k in state.batches})]

    for arrival in arrivals:
        i = arrival.t
        theta_dec[i] = state.policy.theta[arrival.g]
        round_idx[i] = state.t
        record = decide(state, arrival)
        if record.admitted:
            admitted[i] = True
            explored[i] = record.decision == Decision.EXPLORE
            observed[i] = record.observed_label
        accumulate(state, record)
        if ready_to_update(state):
            sizes = {k: len(b) for k, b in state.batches.items()}
            update(state, updater)
            points.append(_snapshot(state, sizes))

    return Trajectory(
        groups=groups,
        points=points,
        x=np.asarray(arrivals.x, dtype=float),
        g=np.asarray(arrivals.g),
        y=np.asarray(arrivals.y),
        admitted=admitted,
        explored=explored,
        observed=observed,
        theta_dec=theta_dec,
        round_idx=round_idx,
    )
