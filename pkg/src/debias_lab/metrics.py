"""Accuracy, fairness gap, bias, regret and exploration-error metrics.

All functions are pure over a :class:`~debias_lab.engine.Trajectory` (or its
arrays) so they can be recomputed from a serialized run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dist_core import DomainError, cdf
from .engine import Trajectory
from .policy import FairnessRule, NoFairness, Population, optimal_thresholds_fair

__all__ = [
    "OracleRef",
    "ConfusionCounts",
    "oracle_ref",
    "score_decisions",
    "confusion_from_decisions",
    "error_indicators",
    "regret",
    "weighted_regret",
    "exploration_error",
    "eo_gap",
    "bias_error",
    "accuracy",
    "first_hit",
]


@dataclass(frozen=True)
class OracleRef:
    """Loss-minimizing thresholds on the true populations."""

    theta_star: Mapping[str, float]

    def thresholds_for(self, groups: tuple[str, ...], g_idx: np.ndarray) -> np.ndarray:
        table = np.array([self.theta_star[g] for g in groups], dtype=float)
        return table[g_idx]


@dataclass(frozen=True)
class ConfusionCounts:
    fp: int = 0
    fn: int = 0
    tp: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.fp + self.fn + self.tp + self.tn

    @property
    def errors(self) -> int:
        return self.fp + self.fn


def oracle_ref(truth: Population, rule: FairnessRule | None = None) -> OracleRef:
    return OracleRef(optimal_thresholds_fair(truth, rule or NoFairness()))


def confusion_from_decisions(decisions, y) -> ConfusionCounts:
    d = np.asarray(decisions, dtype=bool)
    y = np.asarray(y).astype(bool)
    return ConfusionCounts(
        fp=int(np.sum(d & ~y)),
        fn=int(np.sum(~d & y)),
        tp=int(np.sum(d & y)),
        tn=int(np.sum(~d & ~y)),
    )


def score_decisions(x, y, thresholds) -> ConfusionCounts:
    """Confusion counts of the rule ``x >= threshold`` against true labels.

    ``thresholds`` is a scalar or one threshold per record.
    """
    x = np.asarray(x, dtype=float)
    return confusion_from_decisions(x >= np.asarray(thresholds, dtype=float), y)


def error_indicators(decisions, y) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (false positive, false negative) arrays."""
    d = np.asarray(decisions, dtype=bool)
    y = np.asarray(y).astype(bool)
    return d & ~y, ~d & y


def _weighted_errors(x, y, decisions, thresholds, beta: float) -> np.ndarray:
    fp, fn = error_indicators(decisions, y)
    wrong = fp | fn
    if beta == 0.0:
        return wrong.astype(float)
    weights = np.exp(beta * np.abs(np.asarray(x, dtype=float) - thresholds))
    return np.where(wrong, weights, 0.0)


def regret(traj: Trajectory, oracle: OracleRef) -> np.ndarray:
    """Cumulative (FP + FN) of the algorithm minus that of the oracle, per arrival."""
    return weighted_regret(traj, oracle, 0.0)


def weighted_regret(traj: Trajectory, oracle: OracleRef, beta: float = 1.0) -> np.ndarray:
    """Regret with each error weighted by exp(beta * |x - deciding threshold|).

    The algorithm's deciding threshold is its threshold at decision time; the
    oracle's is its own.  With ``beta == 0`` this is :func:`regret` exactly.
    """
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    theta_star = oracle.thresholds_for(traj.groups, traj.g)
    oracle_dec = traj.x >= theta_star
    alg = _weighted_errors(traj.x, traj.y, traj.admitted, traj.theta_dec, beta)
    ref = _weighted_errors(traj.x, traj.y, oracle_dec, theta_star, beta)
    if beta == 0.0:
        return np.cumsum(alg.astype(np.int64) - ref.astype(np.int64))
    return np.cumsum(alg - ref)


def exploration_error(
    est: Population,
    theta: float,
    lb: float,
    eps: float,
    n0_below: float,
    n1_below: float,
    g: str,
) -> float:
    """Net exploration error of one group in one round.

    Expected explored label-0 admits (errors) minus explored label-1 admits
    (corrections) among the ``n_y_below`` arrivals that fell below ``theta``.
    """
    d0, d1 = est[g].dists
    f0, f1 = cdf(d0, theta), cdf(d1, theta)
    if f0 <= 0.0 or f1 <= 0.0:
        raise DomainError("CDF at theta is zero; exploration error undefined")
    frac0 = (f0 - cdf(d0, lb)) / f0
    frac1 = (f1 - cdf(d1, lb)) / f1
    return frac0 * eps * n0_below - frac1 * eps * n1_below


def eo_gap(x, g, y, thresholds, groups: tuple[str, ...] = ("a", "b")) -> float:
    """Empirical |TPR_a - TPR_b| of the rule ``x >= threshold``.

    ``g`` holds group names or indices into ``groups``; ``thresholds`` is a
    mapping group -> threshold or a per-record array.  Returns NaN when a group
    has no label-1 records.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    g = np.asarray(g)
    if isinstance(thresholds, Mapping):
        keys = groups if g.dtype.kind in "iu" else None
        th = np.array(
            [thresholds[keys[gi] if keys else gi] for gi in g.tolist()], dtype=float
        ) if len(g) else np.empty(0)
    else:
        th = np.asarray(thresholds, dtype=float)
    admit = x >= th
    labels = list(range(len(groups))) if g.dtype.kind in "iu" else list(groups)
    if len(labels) < 2:
        return math.nan
    rates = []
    for key in labels[:2]:
        pos = (g == key) & (y == 1)
        if not pos.any():
            return math.nan
        rates.append(float(admit[pos].mean()))
    return abs(rates[0] - rates[1])


def bias_error(est: Population, truth: Population) -> dict[tuple[str, int], float]:
    """|omega_hat - omega| per (group, label), at each estimate's own tau."""
    out = {}
    for g in est.names:
        for y in (0, 1):
            e = est[g].dists[y]
            true = truth[g].dists[y].with_tau(e.tau)
            out[(g, y)] = abs(e.omega - true.omega)
    return out


def accuracy(decisions, y) -> float:
    d = np.asarray(decisions, dtype=bool)
    if d.size == 0:
        return math.nan
    return float(np.mean(d == np.asarray(y).astype(bool)))


def first_hit(traj: Trajectory, truth: Population, g: str, y: int, tol: float) -> float:
    """Arrival count at the first snapshot with |omega_hat - omega| <= tol (inf if never)."""
    for p in traj.points:
        if bias_error(p.est, truth)[(g, y)] <= tol:
            return float(p.arrivals)
    return math.inf
