"""Single-free-parameter distribution families.

Each family keeps every parameter fixed except one (``psi``).  Estimates are
tracked through a reference point ``omega``: the ``tau``-th percentile of the
full distribution.  Moving ``omega`` and re-solving ``psi`` is the only way an
estimate changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "GaussianLocation",
    "BetaAlpha",
    "FamilyKind",
    "DistEstimate",
    "DomainError",
    "NumericError",
    "make_estimate",
    "pdf",
    "cdf",
    "sf",
    "quantile",
    "isf",
    "solve_param_for_percentile",
    "truncated_quantile",
    "sample_batch",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_BETA_BRACKET = (1e-4, 1e4)
_MAX_DOUBLINGS = 200


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(ArithmeticError):
    """A root-finding bracket could not be established."""


@dataclass(frozen=True)
class GaussianLocation:
    """Normal family with known scale; the free parameter is the mean."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class BetaAlpha:
    """Beta family on (0, 1) with ``beta`` fixed; the free parameter is ``alpha``."""

    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 1.0)


FamilyKind = GaussianLocation | BetaAlpha


@dataclass(frozen=True)
class DistEstimate:
    """A member of a single-parameter family plus its cached reference point.

    Build through :func:`make_estimate` (from ``psi``) or
    :meth:`from_omega` (from a reference value); ``omega`` is always derived.
    """

    kind: FamilyKind
    psi: float
    tau: float
    omega: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.tau < 100.0:
            raise DomainError(f"tau must be in (0, 100), got {self.tau}")
        if isinstance(self.kind, BetaAlpha) and not self.psi > 0:
            raise DomainError(f"Beta alpha must be positive, got {self.psi}")
        if not math.isfinite(self.psi):
            raise DomainError(f"psi must be finite, got {self.psi}")
        object.__setattr__(self, "omega", float(quantile(self, self.tau / 100.0)))

    @classmethod
    def from_omega(cls, kind: FamilyKind, tau: float, omega: float) -> "DistEstimate":
        return cls(kind, solve_param_for_percentile(kind, tau, omega), tau)

    def with_psi(self, psi: float) -> "DistEstimate":
        return DistEstimate(self.kind, float(psi), self.tau)

    def with_tau(self, tau: float) -> "DistEstimate":
        return DistEstimate(self.kind, self.psi, tau)

    @property
    def support(self) -> tuple[float, float]:
        return self.kind.support

    def pdf(self, x):
        return pdf(self, x)

    def cdf(self, x):
        return cdf(self, x)

    def quantile(self, p):
        return quantile(self, p)


def make_estimate(kind: FamilyKind, psi: float, tau: float) -> DistEstimate:
    return DistEstimate(kind, float(psi), float(tau))


def _scalar_or_array(values, was_scalar):
    return float(values) if was_scalar else values


def pdf(est: DistEstimate, x):
    """Density at ``x``; zero outside the support."""
    arr = np.asarray(x, dtype=float)
    kind = est.kind
    if isinstance(kind, GaussianLocation):
        z = (arr - est.psi) / kind.sigma
        out = np.exp(-0.5 * z * z) / (kind.sigma * _SQRT_2PI)
    else:
        a, b = est.psi, kind.beta
        inside = (arr > 0.0) & (arr < 1.0)
        xs = np.where(inside, arr, 0.5)
        logp = (a - 1.0) * np.log(xs) + (b - 1.0) * np.log1p(-xs) - special.betaln(a, b)
        out = np.where(inside, np.exp(logp), 0.0)
    return _scalar_or_array(out, arr.ndim == 0)


def cdf(est: DistEstimate, x):
    """P(X <= x), clamped to [0, 1]."""
    arr = np.asarray(x, dtype=float)
    kind = est.kind
    if isinstance(kind, GaussianLocation):
        out = special.ndtr((arr - est.psi) / kind.sigma)
    else:
        out = special.betainc(est.psi, kind.beta, np.clip(arr, 0.0, 1.0))
    out = np.clip(out, 0.0, 1.0)
    return _scalar_or_array(out, arr.ndim == 0)


def sf(est: DistEstimate, x):
    """P(X > x), computed without cancellation in the upper tail."""
    arr = np.asarray(x, dtype=float)
    kind = est.kind
    if isinstance(kind, GaussianLocation):
        out = special.ndtr((est.psi - arr) / kind.sigma)
    else:
        out = special.betainc(kind.beta, est.psi, np.clip(1.0 - arr, 0.0, 1.0))
    out = np.clip(out, 0.0, 1.0)
    return _scalar_or_array(out, arr.ndim == 0)


def _beta_quantile(a: float, b: float, p: np.ndarray) -> np.ndarray:
    x = special.betaincinv(a, b, p)
    # one safeguarded Newton step on the incomplete beta tightens the tails
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        dens = np.exp((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - special.betaln(a, b))
        err = special.betainc(a, b, x) - p
        polished = np.where(dens > 0, x - err / np.where(dens > 0, dens, 1.0), x)
    ok = (polished > 0.0) & (polished < 1.0)
    trial = np.where(ok, polished, x)
    better = np.abs(special.betainc(a, b, trial) - p) < np.abs(err)
    return np.where(better, trial, x)


def quantile(est: DistEstimate, p):
    """Inverse CDF for ``p`` in the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("quantile requires 0 < p < 1")
    kind = est.kind
    if isinstance(kind, GaussianLocation):
        out = est.psi + kind.sigma * special.ndtri(arr)
    else:
        out = _beta_quantile(est.psi, kind.beta, np.atleast_1d(arr))
        if arr.ndim == 0:
            out = out[0]
    return _scalar_or_array(out, arr.ndim == 0)


def isf(est: DistEstimate, q):
    """Inverse survival function: x with P(X > x) = q, accurate for small ``q``."""
    arr = np.asarray(q, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("isf requires 0 < q < 1")
    kind = est.kind
    if isinstance(kind, GaussianLocation):
        out = est.psi - kind.sigma * special.ndtri(arr)
    else:
        # 1 - X ~ Beta(beta, alpha)
        out = 1.0 - _beta_quantile(kind.beta, est.psi, np.atleast_1d(arr))
        if arr.ndim == 0:
            out = out[0]
    return _scalar_or_array(out, arr.ndim == 0)


def solve_param_for_percentile(kind: FamilyKind, tau: float, target: float) -> float:
    """Return ``psi`` whose ``tau``-th percentile equals ``target``.

    The percentile is strictly increasing in ``psi`` for both families, so the
    root is unique.  For the Beta family this is the ``alpha`` solving
    ``I_target(alpha, beta) = tau/100``.
    """
    if not 0.0 < tau < 100.0:
        raise DomainError(f"tau must be in (0, 100), got {tau}")
    if not math.isfinite(target):
        raise DomainError(f"target must be finite, got {target}")
    p = tau / 100.0
    if isinstance(kind, GaussianLocation):
        return float(target - kind.sigma * special.ndtri(p))

    if not 0.0 < target < 1.0:
        raise DomainError(f"Beta target must lie in (0, 1), got {target}")
    b = kind.beta

    def excess(a):
        # cdf at target is decreasing in alpha
        return special.betainc(a, b, target) - p

    lo, hi = _BETA_BRACKET
    for _ in range(_MAX_DOUBLINGS):
        if excess(lo) > 0:
            break
        lo *= 0.5
    else:
        raise NumericError("could not bracket alpha from below")
    for _ in range(_MAX_DOUBLINGS):
        if excess(hi) < 0:
            break
        hi *= 2.0
    else:
        raise NumericError("could not bracket alpha from above")

    # bisect in log space; the bracket spans many decades
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(200):
        lmid = 0.5 * (llo + lhi)
        if excess(math.exp(lmid)) > 0:
            llo = lmid
        else:
            lhi = lmid
        if lhi - llo < 1e-15:
            break
    return math.exp(0.5 * (llo + lhi))


def truncated_quantile(est: DistEstimate, a: float, b: float, p: float) -> float:
    """Quantile of ``est`` restricted to the window (a, b)."""
    if not a < b:
        raise DomainError(f"empty window ({a}, {b})")
    if not 0.0 < p < 1.0:
        raise DomainError("truncated_quantile requires 0 < p < 1")
    fa, fb = cdf(est, a), cdf(est, b)
    mass = fb - fa
    if not mass > 1e-12:
        raise DomainError(f"window ({a}, {b}) carries no probability mass")
    target = fa + p * mass
    x = quantile(est, min(max(target, 1e-300), 1.0 - 1e-16))
    return float(min(max(x, a), b))


def sample_batch(est: DistEstimate, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` values by inverse-transform sampling."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    if n == 0:
        return np.empty(0)
    u = rng.random(n)
    # Generator.random is in [0, 1); nudge the rare exact zero off the edge
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return np.asarray(quantile(est, u), dtype=float)
