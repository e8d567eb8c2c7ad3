"""Arrival generation, CSV ingestion, logistic scoring and distribution fitting."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .dist_core import (
    BetaAlpha,
    DistEstimate,
    DomainError,
    FamilyKind,
    GaussianLocation,
    cdf,
    sample_batch,
)
from .engine import ARRIVAL_STREAM, Arrivals, derive_rng
from .policy import Population, golden_section

__all__ = [
    "RawRecord",
    "LoadResult",
    "ScoreMapping",
    "SchemaError",
    "EmptyInputError",
    "DegenerateDataError",
    "load_records",
    "fit_score_mapping",
    "score",
    "score_all",
    "logistic_loss",
    "fit_distribution",
    "synth_stream",
    "split_train",
    "auc",
]

log = logging.getLogger(__name__)

SCORE_EPS = 1e-9


class SchemaError(KeyError):
    """A configured column is missing from the input header."""


class EmptyInputError(ValueError):
    pass


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    features: tuple[float, ...]
    group: str
    label: int


@dataclass
class LoadResult:
    records: list[RawRecord]
    skipped: int
    feature_names: list[str]


def _one_hot_levels(rows, col):
    levels = sorted({r[col] for r in rows})
    # drop the first level as reference
    return levels[1:]


def load_records(
    path: str | Path,
    features: Sequence[str],
    group: str,
    label: str,
    delimiter: str = ",",
    categorical: Sequence[str] = (),
    positive_label: str | None = None,
) -> LoadResult:
    """Read a delimited file with a header row.

    Numeric feature cells that fail to parse cause the row to be skipped;
    columns listed in ``categorical`` are one-hot encoded.  Labels are read as
    integers unless ``positive_label`` names the positive class value.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames
        if not header:
            raise EmptyInputError(f"{path} is empty")
        header = [h.strip() for h in header]
        reader.fieldnames = header
        needed = list(features) + [group, label]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        rows = [{k: (v or "").strip() for k, v in row.items() if k is not None} for row in reader]
    if not rows:
        raise EmptyInputError(f"{path} has no data rows")

    cat = [c for c in features if c in set(categorical)]
    levels = {c: _one_hot_levels(rows, c) for c in cat}
    names: list[str] = []
    for c in features:
        if c in levels:
            names.extend(f"{c}={lv}" for lv in levels[c])
        else:
            names.append(c)

    records, skipped = [], 0
    for row in rows:
        try:
            vec: list[float] = []
            for c in features:
                if c in levels:
                    vec.extend(1.0 if row[c] == lv else 0.0 for lv in levels[c])
                else:
                    v = float(row[c])
                    if not math.isfinite(v):
                        raise ValueError(c)
                    vec.append(v)
            raw = row[label]
            if positive_label is not None:
                y = int(raw == positive_label)
            else:
                y = int(float(raw))
                if y not in (0, 1):
                    raise ValueError(label)
            g = row[group]
            if not g:
                raise ValueError(group)
        except (ValueError, KeyError):
            skipped += 1
            continue
        records.append(RawRecord(tuple(vec), g, y))
    if skipped:
        log.warning("skipped %d unparseable row(s) in %s", skipped, path)
    return LoadResult(records, skipped, names)


@dataclass
class ScoreMapping:
    """Logistic score over z-scored features; the standardization travels with it."""

    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    squash: bool = True
    losses: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if not (self.weights.shape == self.mean.shape == self.scale.shape):
            raise DomainError("weights and standardization must share the feature dimension")

    @property
    def dim(self) -> int:
        return len(self.weights)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def unstandardize(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.scale + self.mean


def _design(records: Sequence[RawRecord]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features for r in records], dtype=float)
    y = np.array([r.label for r in records], dtype=float)
    return X, y


def logistic_loss(Z: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
    z = Z @ w + b
    # log(1 + e^z) - y z, stable for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def fit_score_mapping(
    records: Sequence[RawRecord], iterations: int = 5000, learning_rate: float = 0.1
) -> ScoreMapping:
    """Full-batch gradient descent on the logistic loss from zero weights."""
    if len(records) < 2:
        raise DegenerateDataError("need at least two records")
    X, y = _design(records)
    if y.min() == y.max():
        raise DegenerateDataError("only one class present")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    n, d = Z.shape
    w = np.zeros(d)
    b = 0.0
    losses = [logistic_loss(Z, y, w, b)]
    for it in range(iterations):
        p = special.expit(Z @ w + b)
        resid = p - y
        w -= learning_rate * (Z.T @ resid) / n
        b -= learning_rate * float(resid.mean())
        if (it + 1) % 100 == 0:
            losses.append(logistic_loss(Z, y, w, b))
    return ScoreMapping(w, b, mean, scale, squash=True, losses=losses)


def score_all(mapping: ScoreMapping, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != mapping.dim:
        raise DomainError(f"expected {mapping.dim} features, got {X.shape[1]}")
    z = mapping.standardize(X) @ mapping.weights + mapping.intercept
    if not mapping.squash:
        return z
    return np.clip(special.expit(z), SCORE_EPS, 1.0 - SCORE_EPS)


def score(mapping: ScoreMapping, record: RawRecord | Sequence[float]) -> float:
    feats = record.features if isinstance(record, RawRecord) else record
    return float(score_all(mapping, [feats])[0])


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    from scipy.stats import rankdata

    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise DegenerateDataError("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def _beta_loglik(alpha: float, beta: float, mean_log_x: float, mean_log_1mx: float) -> float:
    return (
        (alpha - 1.0) * mean_log_x
        + (beta - 1.0) * mean_log_1mx
        - float(special.betaln(alpha, beta))
    )


def fit_distribution(samples, kind: FamilyKind, tau: float) -> DistEstimate:
    """Maximum-likelihood fit of the free parameter with the others held fixed."""
    x = np.asarray(samples, dtype=float)
    if x.size < 10:
        raise DomainError(f"need at least 10 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    if isinstance(kind, GaussianLocation):
        return DistEstimate(kind, float(x.mean()), tau)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise DomainError("Beta samples must lie in (0, 1)")
    mlx, ml1x = float(np.mean(np.log(x))), float(np.mean(np.log1p(-x)))
    # concave in log(alpha); search there for a well-scaled bracket
    la, _ = golden_section(
        lambda la: -_beta_loglik(math.exp(la), kind.beta, mlx, ml1x),
        math.log(1e-3),
        math.log(1e3),
        tol=1e-10,
    )
    return DistEstimate(kind, math.exp(la), tau)


def synth_stream(true_pop: Population, n: int, seed: int, run_index: int = 0) -> Arrivals:
    """Draw ``n`` arrivals: group by weight, label by alpha, feature from the truth."""
    groups = true_pop.names
    if n <= 0:
        return Arrivals(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), groups)
    rng = derive_rng(seed, run_index, ARRIVAL_STREAM)
    weights = np.array([true_pop[g].weight for g in groups], dtype=float)
    if not weights.sum() > 0:
        raise DomainError("group weights sum to zero")
    g_idx = rng.choice(len(groups), size=n, p=weights / weights.sum())
    alpha1 = np.array([true_pop[g].alpha1 for g in groups])
    y = (rng.random(n) < alpha1[g_idx]).astype(np.int64)
    x = np.empty(n)
    # cells are sampled in a fixed order so the stream depends only on the seed
    for gi, g in enumerate(groups):
        for label in (0, 1):
            mask = (g_idx == gi) & (y == label)
            x[mask] = sample_batch(true_pop[g].dists[label], int(mask.sum()), rng)
    return Arrivals(x, g_idx.astype(np.int64), y, groups)


def split_train(records: Sequence[RawRecord], frac: float, seed: int = 0):
    """Random (train, rest) split; ``train`` holds ``ceil(frac * n)`` records."""
    if not 0.0 < frac <= 1.0:
        raise DomainError("train fraction must be in (0, 1]")
    n = len(records)
    k = max(1, math.ceil(frac * n))
    order = derive_rng(seed, 0, 99).permutation(n)
    train = [records[i] for i in order[:k]]
    rest = [records[i] for i in order[k:]]
    return train, rest
