"""Debiasing a Gaussian whose mean and variance are both unknown.

Reference points are medians, so the exploration window (LB, theta) and the
update window (theta, UB) are symmetric about the current mean estimate.  The
sample mean of in-window data then estimates the full mean directly, while the
sample variance is a truncated variance that has to be inverted to recover
sigma.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .dataio import synth_stream
from .dist_core import DistEstimate, DomainError, GaussianLocation
from .engine import (
    MIN_WINDOW_POINTS,
    ActiveDebiasing,
    EngineConfig,
    EngineState,
    Trajectory,
    _consume,
    run,
)
from .policy import Adaptive, EpsilonSchedule, Population

__all__ = [
    "VarianceMode",
    "LabelMoments",
    "TwoParamState",
    "TwoParamConfig",
    "InfeasibleVarianceError",
    "incr_mean",
    "incr_var",
    "absorb",
    "truncated_variance",
    "untruncate_variance",
    "run_two_param",
    "mu_path",
    "sigma_path",
]

log = logging.getLogger(__name__)

SIGMA_LO = 1e-6
SIGMA_HI = 1e6
_BISECT_STEPS = 80
_SERIES_K = 2.0
_SERIES_TERMS = 40


class VarianceMode(str, enum.Enum):
    EXACT = "exact"
    PAPER_LITERAL = "paper_literal"


class InfeasibleVarianceError(ValueError):
    """The sample variance exceeds every truncated variance the window allows."""

    def __init__(self, msg: str, upper: float = SIGMA_HI):
        super().__init__(msg)
        self.upper = upper


@dataclass
class LabelMoments:
    """Running moments of the in-window samples of one label."""

    n: int = 0
    mu_hat: float = 0.0
    sigma_hat: float = 1.0
    m2: float = field(default=0.0, repr=False)  # sum of squared deviations (exact mode)
    s2_literal: float = field(default=0.0, repr=False)
    mode: VarianceMode = VarianceMode.EXACT

    @property
    def s2_hat(self) -> float:
        if self.mode == VarianceMode.PAPER_LITERAL:
            return self.s2_literal
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def reset(self) -> None:
        self.n = 0
        self.mu_hat = 0.0
        self.m2 = 0.0
        self.s2_literal = 0.0


@dataclass
class TwoParamState:
    labels: dict[int, LabelMoments]

    @classmethod
    def fresh(cls, sigma0: float = 1.0, sigma1: float = 1.0, mode=VarianceMode.EXACT):
        mode = VarianceMode(mode)
        return cls({0: LabelMoments(sigma_hat=sigma0, mode=mode), 1: LabelMoments(sigma_hat=sigma1, mode=mode)})

    def __getitem__(self, y: int) -> LabelMoments:
        return self.labels[y]


def incr_mean(state: LabelMoments, x_new: float) -> None:
    n = state.n
    state.mu_hat = (n * state.mu_hat + x_new) / (n + 1)
    state.n = n + 1


def incr_var(state: LabelMoments, x_new: float) -> None:
    """Variance step for absorbing ``x_new``; call before :func:`incr_mean`."""
    n = state.n
    if n < 1:
        raise DomainError("incr_var needs at least one absorbed sample")
    mu = state.mu_hat
    if state.mode == VarianceMode.PAPER_LITERAL:
        state.s2_literal = (n - 1) / n * state.s2_literal + (x_new * x_new - mu * mu) / n
        return
    delta = x_new - mu
    state.m2 += delta * delta * n / (n + 1)


def absorb(state: LabelMoments, x_new: float) -> None:
    if state.n >= 1:
        incr_var(state, x_new)
    incr_mean(state, x_new)


def _shrink_factor(k):
    """Var of N(0,1) truncated to (-k, k), i.e. 1 - 2 k phi(k) / (2 Phi(k) - 1).

    For small and moderate k the closed form cancels badly.  There we use
    r = T / (1 + T) with T = sum_{n>=1} k^(2n) / (2n+1)!!, which follows from
    the series of the normal integral and has only positive terms.
    """
    k = np.asarray(k, dtype=float)
    small = k < _SERIES_K
    ks = np.where(small, 1.0, k)
    phi = np.exp(-0.5 * ks * ks) / math.sqrt(2.0 * math.pi)
    mass = special.erf(ks / math.sqrt(2.0))
    big = 1.0 - 2.0 * ks * phi / mass

    k2 = np.where(small, k * k, 0.0)
    term = np.ones_like(k2)
    total = np.zeros_like(k2)
    for n in range(1, _SERIES_TERMS + 1):
        term = term * k2 / (2 * n + 1)
        total = total + term
    series = total / (1.0 + total)
    return np.where(small, series, big)


def truncated_variance(sigma, a: float, b: float, mu: float):
    """Variance of N(mu, sigma^2) restricted to [a, b]; general (asymmetric) form."""
    sigma = np.asarray(sigma, dtype=float)
    al = (a - mu) / sigma
    be = (b - mu) / sigma
    if abs((b - mu) - (mu - a)) <= 1e-12 * max(1.0, b - a):
        out = sigma * sigma * _shrink_factor(be)
        return float(out) if out.ndim == 0 else out
    z = special.ndtr(be) - special.ndtr(al)
    pa = np.exp(-0.5 * al * al) / math.sqrt(2.0 * math.pi)
    pb = np.exp(-0.5 * be * be) / math.sqrt(2.0 * math.pi)
    out = sigma * sigma * (1.0 + (al * pa - be * pb) / z - ((pa - pb) / z) ** 2)
    return float(out) if out.ndim == 0 else out


def untruncate_variance(s2: float, a: float, b: float, mu: float, sigma_init: float | None = None) -> float:
    """Solve for sigma given the variance ``s2`` of data truncated to a symmetric window.

    The truncated variance increases strictly in sigma towards (b - a)^2 / 12, the
    variance of the uniform law on the window; larger ``s2`` has no solution and
    raises :class:`InfeasibleVarianceError`.
    """
    if not a < mu < b:
        raise DomainError(f"need a < mu < b, got a={a}, mu={mu}, b={b}")
    if abs((b - mu) - (mu - a)) > 1e-9 * max(1.0, b - a):
        raise DomainError(f"window ({a}, {b}) is not symmetric about {mu}")
    if not s2 > 0.0:
        raise DomainError(f"s2 must be positive, got {s2}")
    h = 0.5 * (b - a)
    if s2 >= h * h / 3.0:
        raise InfeasibleVarianceError(f"s2={s2} exceeds the window's variance limit {h * h / 3.0}")

    def f(sig):
        return sig * sig * float(_shrink_factor(h / sig)) - s2

    lo, hi = SIGMA_LO, SIGMA_HI
    if sigma_init is not None and SIGMA_LO < sigma_init < SIGMA_HI:
        # warm start: widen geometrically around the previous estimate
        lo = hi = float(sigma_init)
        while lo > SIGMA_LO and f(lo) > 0.0:
            lo = max(SIGMA_LO, lo / 2.0)
        while hi < SIGMA_HI and f(hi) < 0.0:
            hi = min(SIGMA_HI, hi * 2.0)
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (llo + lhi)
        if f(math.exp(mid)) < 0.0:
            llo = mid
        else:
            lhi = mid
    return math.exp(0.5 * (llo + lhi))


@dataclass
class TwoParamConfig:
    initial: Population
    truth: Population
    horizon: int = 100_000
    schedule: EpsilonSchedule = field(default_factory=Adaptive)
    batch_min: int = 200
    eta: float = 1.0
    mode: VarianceMode = VarianceMode.EXACT

    def validate(self):
        for pop in (self.initial, self.truth):
            for g, m in pop.groups.items():
                for d in m.dists:
                    if not isinstance(d.kind, GaussianLocation):
                        raise DomainError(f"group {g}: two-parameter debiasing needs Gaussian families")
        for g, m in self.initial.groups.items():
            for d in m.dists:
                if d.tau != 50:
                    raise DomainError(f"group {g}: reference points must be medians (tau=50)")
        if self.horizon < 0:
            raise DomainError("horizon must be nonnegative")


def _symmetric_window(state: EngineState, g: str, y: int, center: float) -> tuple[float, float] | None:
    pol = state.policy
    theta = pol.theta[g]
    h = min(theta - center, center - pol.lb[g]) if y == 0 else min(center - theta, pol.ub[g] - center)
    if not h > 0.0:
        return None
    return center - h, center + h


def _make_updater(mode: VarianceMode, infeasible: list[int]):
    def updater(state: EngineState) -> None:
        eta = state.config.eta
        for g in state.est.names:
            for y in (0, 1):
                old = state.est[g].dists[y]
                window = _symmetric_window(state, g, y, old.psi)
                if window is None:
                    continue
                a, b = window
                inside = [e for e in state.batches[(g, y)] if a <= e.x <= b]
                if len(inside) < MIN_WINDOW_POINTS:
                    continue
                moments = LabelMoments(sigma_hat=old.kind.sigma, mode=mode)
                for x in _consume(state, inside).tolist():
                    absorb(moments, x)
                sigma = old.kind.sigma
                s2 = moments.s2_hat
                if s2 > 0.0:
                    try:
                        sigma = untruncate_variance(s2, a, b, old.psi, old.kind.sigma)
                    except InfeasibleVarianceError:
                        infeasible.append(state.t)
                        log.debug("round %d: infeasible variance for (%s, %d)", state.t, g, y)
                mu = (1.0 - eta) * old.psi + eta * moments.mu_hat
                sigma = (1.0 - eta) * old.kind.sigma + eta * sigma
                new = DistEstimate(GaussianLocation(sigma), mu, old.tau)
                state.est = state.est.replace(g, state.est[g].with_dist(y, new))

    return updater


def run_two_param(config: TwoParamConfig, seed: int, run_index: int = 0) -> Trajectory:
    """Run active debiasing with joint mean/variance updates on synthetic arrivals."""
    config.validate()
    engine_cfg = EngineConfig(
        variant=ActiveDebiasing(),
        initial=config.initial,
        schedule=config.schedule,
        batch_min=config.batch_min,
        eta=config.eta,
    )
    arrivals = synth_stream(config.truth, config.horizon, seed, run_index)
    infeasible: list[int] = []
    traj = run(engine_cfg, arrivals, seed, run_index, updater=_make_updater(VarianceMode(config.mode), infeasible))
    if infeasible:
        log.info("%d infeasible variance inversions kept the previous sigma", len(infeasible))
    return traj


def mu_path(traj: Trajectory, g: str, y: int) -> np.ndarray:
    return np.array([p.est[g].dists[y].psi for p in traj.points])


def sigma_path(traj: Trajectory, g: str, y: int) -> np.ndarray:
    return np.array([p.est[g].dists[y].kind.sigma for p in traj.points])
