"""Run configured experiments and serialize them as deterministic CSV.

Runs are independent given (seed, run index), so they may execute on a thread
pool; rows are buffered per run and written in run-index order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .dataio import synth_stream
from .engine import PureExploration, Trajectory, run
from .mdp import FIELDS, ComparisonReport, compare_actions
from .metrics import (
    accuracy,
    bias_error,
    eo_gap,
    exploration_error,
    oracle_ref,
    regret,
    weighted_regret,
)

__all__ = [
    "TRAJECTORY_HEADER",
    "SUMMARY_HEADER",
    "MDP_HEADER",
    "FP_FN_HEADER",
    "RunResult",
    "thread_count",
    "run_experiment",
    "trajectory_rows",
    "summary_rows",
    "fp_fn_rows",
    "mdp_rows",
    "write_csv",
    "fmt",
    "run_mdp",
]

TRAJECTORY_HEADER = (
    "run_id", "seed", "t", "group", "label", "omega_hat", "psi", "omega_true", "theta",
    "lb", "ub", "epsilon", "batch_n", "clamped", "accuracy_window", "eo_gap",
    "regret_cum", "wregret_cum", "bias_err", "exploration_error",
)
SUMMARY_HEADER = (
    "run_id", "seed", "group", "label", "rounds", "arrivals", "omega_hat_final",
    "omega_true", "bias_err_final", "regret_total", "wregret_total",
)
FP_FN_HEADER = ("param", "value", "run_id", "seed", "t", "arrivals", "fp_cum", "fn_cum")
MDP_HEADER = (
    "action", "replications",
    *(f"{f}_{s}" for f in FIELDS for s in ("mean", "se")),
    "theorem5_condition",
)

THREADS_ENV = "DEBIAS_LAB_THREADS"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def fmt(v) -> str:
    """Cell text: repr for floats (round-trips exactly), 0/1 for booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """ASCII, comma-separated, LF line endings, no quoting needed by construction."""
    lines = [",".join(header)]
    lines.extend(",".join(fmt(c) for c in row) for row in rows)
    data = "\n".join(lines) + "\n"
    Path(path).write_bytes(data.encode("ascii"))


@dataclass
class RunResult:
    run_id: int
    seed: int
    traj: Trajectory
    regret: np.ndarray
    wregret: np.ndarray


def _one_run(cfg: ExperimentConfig, run_id: int, seed: int) -> RunResult:
    arrivals = synth_stream(cfg.truth, cfg.horizon, seed, run_id)
    traj = run(cfg.engine_config(), arrivals, seed, run_id)
    oracle = oracle_ref(cfg.truth, cfg.rule)
    return RunResult(run_id, seed, traj, regret(traj, oracle), weighted_regret(traj, oracle, cfg.beta))


def run_experiment(cfg: ExperimentConfig, seeds: Sequence[int] | None = None) -> list[RunResult]:
    """One run per seed; run ids are positions in the seed list."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    jobs: list[Callable[[], RunResult]] = [
        (lambda i=i, s=s: _one_run(cfg, i, s)) for i, s in enumerate(seeds)
    ]
    threads = min(thread_count(), len(jobs))
    if threads <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _cum_at(series: np.ndarray, arrivals: int):
    return series[arrivals - 1] if arrivals > 0 else 0


def trajectory_rows(cfg: ExperimentConfig, res: RunResult) -> list[list]:
    traj = res.traj
    pure = isinstance(cfg.engine_config().variant, PureExploration)
    rows = []
    prev = None
    for p in traj.points:
        lo = prev.arrivals if prev is not None else 0
        hi = p.arrivals
        sl = slice(lo, hi)
        if prev is None or hi == lo:
            acc = gap = math.nan
        else:
            acc = accuracy(traj.admitted[sl], traj.y[sl])
            gap = eo_gap(traj.x[sl], traj.g[sl], traj.y[sl], traj.theta_dec[sl], traj.groups)
        bias = bias_error(p.est, cfg.truth)
        for gi, g in enumerate(traj.groups):
            xerr = math.nan
            if prev is not None:
                mask = traj.g[sl] == gi
                x, y = traj.x[sl][mask], traj.y[sl][mask]
                theta = prev.theta[g]
                below = x < theta
                lb = -math.inf if pure else prev.lb[g]
                try:
                    xerr = exploration_error(
                        prev.est, theta, lb, prev.epsilon,
                        int(np.sum(below & (y == 0))), int(np.sum(below & (y == 1))), g,
                    )
                except ValueError:
                    xerr = math.nan
            for y in (0, 1):
                true = cfg.truth[g].dists[y].with_tau(p.est[g].dists[y].tau)
                rows.append([
                    res.run_id, res.seed, p.t, g, y,
                    p.omega_hat[(g, y)], p.psi[(g, y)], true.omega,
                    p.theta[g], p.lb[g], p.ub[g], p.epsilon,
                    p.batch_n[(g, y)], p.clamped[g], acc, gap,
                    _cum_at(res.regret, hi), _cum_at(res.wregret, hi),
                    bias[(g, y)], xerr,
                ])
        prev = p
    return rows


def summary_rows(cfg: ExperimentConfig, res: RunResult) -> list[list]:
    final = res.traj.final
    bias = bias_error(final.est, cfg.truth)
    n = len(res.traj)
    rows = []
    for g in res.traj.groups:
        for y in (0, 1):
            true = cfg.truth[g].dists[y].with_tau(final.est[g].dists[y].tau)
            rows.append([
                res.run_id, res.seed, g, y, final.t, n, final.omega_hat[(g, y)], true.omega,
                bias[(g, y)], _cum_at(res.regret, n), _cum_at(res.wregret, n),
            ])
    return rows


def fp_fn_rows(param: str, value, res: RunResult) -> list[list]:
    traj = res.traj
    fp = np.cumsum(traj.admitted & (traj.y == 0))
    fn = np.cumsum(~traj.admitted & (traj.y == 1))
    return [
        [param, value, res.run_id, res.seed, p.t, p.arrivals, _cum_at(fp, p.arrivals), _cum_at(fn, p.arrivals)]
        for p in traj.points
    ]


def mdp_rows(report: ComparisonReport) -> list[list]:
    rows = []
    for action, summary in report.summaries.items():
        cells = [action.value, summary.n]
        for f in FIELDS:
            cells += [summary.mean[f], summary.se[f]]
        cells.append(report.theorem5_condition)
        rows.append(cells)
    return rows


def run_mdp(cfg: ExperimentConfig, replications: int | None = None) -> ComparisonReport:
    if cfg.mdp is None:
        raise ValueError("config has no [mdp] section")
    if len(cfg.truth.names) != 1:
        raise ValueError("the mdp experiment uses exactly one group")
    g = cfg.truth.names[0]
    m = cfg.mdp
    return compare_actions(
        cfg.initial[g], cfg.truth[g], m.costs, replications or m.replications, m.seed, m.strategy
    )
