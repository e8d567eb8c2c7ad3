"""TOML experiment configuration with strict key checking.

Layout::

    [run]        variant, strategy, horizon, seeds, batch_min, eta, beta, action, gamma
    [fairness]   rule, slack
    [tau]        label0, label1
    [epsilon]    schedule, eps0, gain, window, eps_min, eps_max, step, every
    [group.<g>]  alpha1, weight
    [group.<g>.label0] / [group.<g>.label1]
                 family, sigma | beta, true_psi | true_omega, init_psi | init_omega
    [mdp]        L1h, L1l, L2h, L2l, gamma, N1, N2, eps, replications, seed, strategy

Every key is optional except the group tables.  Unknown keys are errors.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dist_core import BetaAlpha, DistEstimate, DomainError, GaussianLocation, solve_param_for_percentile
from .engine import (
    ActiveDebiasing,
    EngineConfig,
    ExploitationOnly,
    ExploreAction,
    PureExploration,
    UpdateStrategy,
)
from .mdp import MdpCostParams
from .policy import (
    Adaptive,
    DegenerateError,
    EpsilonSchedule,
    EqualOpportunity,
    FairnessRule,
    FixedDecay,
    GroupModel,
    NoFairness,
    OrderingError,
    Population,
    SameDecisionRule,
    compute_policy,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MdpSection",
    "SWEEPABLE",
    "load_config",
    "parse_config",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


_SECTIONS = {"run", "fairness", "tau", "epsilon", "group", "mdp"}
_RUN_KEYS = {"variant", "strategy", "horizon", "seeds", "batch_min", "eta", "beta", "action", "gamma"}
_FAIR_KEYS = {"rule", "slack"}
_TAU_KEYS = {"label0", "label1"}
_EPS_KEYS = {"schedule", "eps0", "gain", "window", "eps_min", "eps_max", "step", "every"}
_GROUP_KEYS = {"alpha1", "weight", "label0", "label1"}
_LABEL_KEYS = {"family", "sigma", "beta", "true_psi", "true_omega", "init_psi", "init_omega"}
_MDP_KEYS = {"L1h", "L1l", "L2h", "L2l", "gamma", "N1", "N2", "eps", "replications", "seed", "strategy"}

VARIANTS = ("active", "exploitation_only", "pure_exploration")
RULES = ("none", "same_decision", "equal_opportunity")

# sweep name -> (section, key)
SWEEPABLE = {
    "tau0": ("tau", "label0"),
    "tau1": ("tau", "label1"),
    "eps0": ("epsilon", "eps0"),
    "gain": ("epsilon", "gain"),
    "window": ("epsilon", "window"),
    "eps_min": ("epsilon", "eps_min"),
    "batch_min": ("run", "batch_min"),
    "eta": ("run", "eta"),
    "beta": ("run", "beta"),
    "gamma": ("run", "gamma"),
    "horizon": ("run", "horizon"),
    "slack": ("fairness", "slack"),
}
_INT_PARAMS = {"window", "batch_min", "horizon"}


@dataclass(frozen=True)
class MdpSection:
    costs: MdpCostParams
    replications: int = 200
    seed: int = 0
    strategy: UpdateStrategy = UpdateStrategy.RATE_BALANCED


@dataclass
class ExperimentConfig:
    variant: str
    strategy: UpdateStrategy
    rule: FairnessRule
    tau0: float
    tau1: float
    schedule: EpsilonSchedule
    batch_min: int
    eta: float
    truth: Population
    initial: Population
    horizon: int
    seeds: list[int]
    beta: float
    action: ExploreAction
    gamma: float
    mdp: MdpSection | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def engine_config(self) -> EngineConfig:
        if self.variant == "active":
            variant = ActiveDebiasing(self.strategy)
        elif self.variant == "pure_exploration":
            variant = PureExploration()
        else:
            variant = ExploitationOnly()
        return EngineConfig(
            variant=variant,
            initial=self.initial,
            schedule=self.schedule,
            rule=self.rule,
            batch_min=self.batch_min,
            eta=self.eta,
            action=self.action,
            gamma=self.gamma,
        )

    def with_param(self, name: str, value: float) -> "ExperimentConfig":
        """Copy with one sweepable parameter replaced (re-validated)."""
        if name not in SWEEPABLE:
            raise ConfigError(name, f"not sweepable; choose from {', '.join(sorted(SWEEPABLE))}")
        section, key = SWEEPABLE[name]
        raw = copy.deepcopy(self.raw)
        if name in _INT_PARAMS:
            if float(value) != int(value):
                raise ConfigError(name, f"expected an integer, got {value}")
            value = int(value)
        raw.setdefault(section, {})[key] = value
        return parse_config(raw)


def _check_keys(table: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(where, "expected a table")
    for k in table:
        if k not in allowed:
            name = f"{where}.{k}" if where else k
            raise ConfigError(name, "unknown key")
    return table


def _num(table: dict, key: str, where: str, default=None, kind=float):
    full = f"{where}.{key}"
    if key not in table:
        if default is None:
            raise ConfigError(full, "missing required key")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(full, f"expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(full, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _choice(table: dict, key: str, where: str, options, default: str) -> str:
    v = table.get(key, default)
    if v not in options:
        raise ConfigError(f"{where}.{key}", f"expected one of {', '.join(options)}, got {v!r}")
    return v


def _schedule(eps: dict) -> EpsilonSchedule:
    where = "epsilon"
    kind = _choice(eps, "schedule", where, ("adaptive", "fixed_decay"), "adaptive")
    try:
        if kind == "adaptive":
            if "step" in eps or "every" in eps:
                bad = "step" if "step" in eps else "every"
                raise ConfigError(f"{where}.{bad}", "only valid with schedule = 'fixed_decay'")
            d = Adaptive()
            return Adaptive(
                eps0=_num(eps, "eps0", where, d.eps0),
                gain=_num(eps, "gain", where, d.gain),
                window=_num(eps, "window", where, d.window, int),
                eps_min=_num(eps, "eps_min", where, d.eps_min),
                eps_max=_num(eps, "eps_max", where, d.eps_max),
            )
        if "gain" in eps or "window" in eps:
            bad = "gain" if "gain" in eps else "window"
            raise ConfigError(f"{where}.{bad}", "only valid with schedule = 'adaptive'")
        d = FixedDecay()
        return FixedDecay(
            eps0=_num(eps, "eps0", where, d.eps0),
            step=_num(eps, "step", where, d.step),
            every=_num(eps, "every", where, d.every, int),
            eps_min=_num(eps, "eps_min", where, d.eps_min),
            eps_max=_num(eps, "eps_max", where, d.eps_max),
        )
    except DomainError as exc:
        raise ConfigError(where, str(exc)) from exc


def _rule(fair: dict) -> FairnessRule:
    kind = _choice(fair, "rule", "fairness", RULES, "none")
    slack = _num(fair, "slack", "fairness", 0.0)
    if kind != "equal_opportunity" and "slack" in fair:
        raise ConfigError("fairness.slack", "only valid with rule = 'equal_opportunity'")
    if kind == "none":
        return NoFairness()
    if kind == "same_decision":
        return SameDecisionRule()
    try:
        return EqualOpportunity(slack)
    except DomainError as exc:
        raise ConfigError("fairness.slack", str(exc)) from exc


def _label_dists(spec: dict, where: str, tau: float) -> tuple[DistEstimate, DistEstimate]:
    _check_keys(spec, _LABEL_KEYS, where)
    family = _choice(spec, "family", where, ("gaussian", "beta"), "gaussian")
    try:
        if family == "gaussian":
            if "beta" in spec:
                raise ConfigError(f"{where}.beta", "only valid with family = 'beta'")
            kind = GaussianLocation(_num(spec, "sigma", where, 1.0))
        else:
            if "sigma" in spec:
                raise ConfigError(f"{where}.sigma", "only valid with family = 'gaussian'")
            kind = BetaAlpha(_num(spec, "beta", where))
    except DomainError as exc:
        raise ConfigError(where, str(exc)) from exc

    def one(prefix: str) -> DistEstimate:
        psi_key, omega_key = f"{prefix}_psi", f"{prefix}_omega"
        if (psi_key in spec) == (omega_key in spec):
            raise ConfigError(f"{where}.{psi_key}", f"give exactly one of {psi_key} / {omega_key}")
        try:
            if psi_key in spec:
                return DistEstimate(kind, _num(spec, psi_key, where), tau)
            omega = _num(spec, omega_key, where)
            return DistEstimate(kind, solve_param_for_percentile(kind, tau, omega), tau)
        except DomainError as exc:
            key = psi_key if psi_key in spec else omega_key
            raise ConfigError(f"{where}.{key}", str(exc)) from exc

    return one("true"), one("init")


def _populations(groups: dict, tau0: float, tau1: float) -> tuple[Population, Population]:
    if not isinstance(groups, dict) or not groups:
        raise ConfigError("group", "at least one [group.<name>] table is required")
    truth, init = {}, {}
    for g, table in groups.items():
        where = f"group.{g}"
        _check_keys(table, _GROUP_KEYS, where)
        for lab in ("label0", "label1"):
            if lab not in table:
                raise ConfigError(f"{where}.{lab}", "missing required table")
        t0, i0 = _label_dists(table["label0"], f"{where}.label0", tau0)
        t1, i1 = _label_dists(table["label1"], f"{where}.label1", tau1)
        alpha1 = _num(table, "alpha1", where, 0.5)
        if not 0.0 < alpha1 < 1.0:
            raise ConfigError(f"{where}.alpha1", f"must lie in (0, 1), got {alpha1}")
        weight = _num(table, "weight", where, 1.0)
        try:
            truth[g] = GroupModel((t0, t1), alpha1, weight)
            init[g] = GroupModel((i0, i1), alpha1, weight)
        except (DomainError, ValueError) as exc:
            raise ConfigError(where, str(exc)) from exc
    return Population(truth), Population(init)


def _mdp(table: dict) -> MdpSection:
    where = "mdp"
    _check_keys(table, _MDP_KEYS, where)
    try:
        costs = MdpCostParams(
            L1h=_num(table, "L1h", where),
            L1l=_num(table, "L1l", where),
            L2h=_num(table, "L2h", where),
            L2l=_num(table, "L2l", where),
            gamma=_num(table, "gamma", where, 0.5),
            N1=_num(table, "N1", where, 1000, int),
            N2=_num(table, "N2", where, 1000, int),
            eps=_num(table, "eps", where, 1.0),
        )
    except DomainError as exc:
        raise ConfigError(where, str(exc)) from exc
    reps = _num(table, "replications", where, 200, int)
    if reps < 1:
        raise ConfigError(f"{where}.replications", "must be positive")
    strategy = _choice(table, "strategy", where, [s.value for s in UpdateStrategy], "rate_balanced")
    return MdpSection(costs, reps, _num(table, "seed", where, 0, int), UpdateStrategy(strategy))


def parse_config(raw: dict) -> ExperimentConfig:
    _check_keys(raw, _SECTIONS, "")
    run = _check_keys(raw.get("run", {}), _RUN_KEYS, "run")
    fair = _check_keys(raw.get("fairness", {}), _FAIR_KEYS, "fairness")
    tau = _check_keys(raw.get("tau", {}), _TAU_KEYS, "tau")
    eps = _check_keys(raw.get("epsilon", {}), _EPS_KEYS, "epsilon")

    tau0 = _num(tau, "label0", "tau", 50.0)
    tau1 = _num(tau, "label1", "tau", 50.0)
    for key, v in (("label0", tau0), ("label1", tau1)):
        if not 0.0 < v < 100.0:
            raise ConfigError(f"tau.{key}", f"must lie in (0, 100), got {v}")

    variant = _choice(run, "variant", "run", VARIANTS, "active")
    strategy = UpdateStrategy(
        _choice(run, "strategy", "run", [s.value for s in UpdateStrategy], UpdateStrategy.MIRRORED_WINDOW.value)
    )
    action = ExploreAction(_choice(run, "action", "run", [a.value for a in ExploreAction], "uniform"))
    horizon = _num(run, "horizon", "run", 10_000, int)
    if horizon < 0:
        raise ConfigError("run.horizon", "must be nonnegative")
    seeds = run.get("seeds", [0])
    if (
        not isinstance(seeds, list)
        or not seeds
        or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds)
    ):
        raise ConfigError("run.seeds", "expected a nonempty list of nonnegative integers")
    beta = _num(run, "beta", "run", 1.0)
    if beta < 0:
        raise ConfigError("run.beta", "must be nonnegative")

    truth, initial = _populations(raw.get("group"), tau0, tau1)
    rule = _rule(fair)
    if isinstance(rule, EqualOpportunity) and len(truth.names) != 2:
        raise ConfigError("fairness.rule", "equal_opportunity needs exactly two groups")

    cfg = ExperimentConfig(
        variant=variant,
        strategy=strategy,
        rule=rule,
        tau0=tau0,
        tau1=tau1,
        schedule=_schedule(eps),
        batch_min=_num(run, "batch_min", "run", 50, int),
        eta=_num(run, "eta", "run", 1.0),
        truth=truth,
        initial=initial,
        horizon=horizon,
        seeds=list(seeds),
        beta=beta,
        action=action,
        gamma=_num(run, "gamma", "run", 0.0),
        mdp=_mdp(raw["mdp"]) if "mdp" in raw else None,
        raw=copy.deepcopy(raw),
    )
    try:
        cfg.engine_config().validate()
    except DomainError as exc:
        msg = str(exc)
        key = next((f"run.{k}" for k in ("batch_min", "eta", "gamma") if k in msg), "run")
        raise ConfigError(key, msg) from exc
    for name, pop in (("true", truth), ("init", initial)):
        try:
            compute_policy(pop, rule, 0.0)
        except (DegenerateError, OrderingError, DomainError) as exc:
            raise ConfigError(f"group ({name} parameters)", str(exc)) from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a TOML file; I/O problems surface as ``OSError``."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    return parse_config(raw)
