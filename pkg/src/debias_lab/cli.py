"""Command line entry point: simulate, mdp, sweep and fit.

Exit codes: 0 success, 2 invalid configuration or input schema, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import SWEEPABLE, ConfigError, load_config
from .dataio import (
    DegenerateDataError,
    EmptyInputError,
    SchemaError,
    fit_distribution,
    fit_score_mapping,
    load_records,
    score_all,
    split_train,
)
from .dist_core import BetaAlpha, DomainError, GaussianLocation
from .experiment import (
    FP_FN_HEADER,
    MDP_HEADER,
    SUMMARY_HEADER,
    TRAJECTORY_HEADER,
    fp_fn_rows,
    mdp_rows,
    run_experiment,
    run_mdp,
    summary_rows,
    trajectory_rows,
    write_csv,
)

log = logging.getLogger("debias_lab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


class UsageError(ValueError):
    pass


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_runs(cfg, results, out: Path) -> None:
    traj, summ = [], []
    for res in results:
        traj.extend(trajectory_rows(cfg, res))
        summ.extend(summary_rows(cfg, res))
    write_csv(out / "trajectory.csv", TRAJECTORY_HEADER, traj)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summ)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else None
    results = run_experiment(cfg, seeds)
    _write_runs(cfg, results, _out_dir(args.out))
    return EXIT_OK


def cmd_mdp(args) -> int:
    cfg = load_config(args.config)
    if cfg.mdp is None:
        raise ConfigError("mdp", "the mdp subcommand needs an [mdp] section")
    if len(cfg.truth.names) != 1:
        raise ConfigError("group", "the mdp subcommand needs exactly one group")
    if args.replications is not None and args.replications < 1:
        raise UsageError("--replications must be positive")
    report = run_mdp(cfg, args.replications)
    write_csv(_out_dir(args.out) / "mdp_report.csv", MDP_HEADER, mdp_rows(report))
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError("--values is empty")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"--values: {exc}") from exc


def _value_label(v: float):
    return int(v) if float(v).is_integer() else v


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise ConfigError(args.param, f"not sweepable; choose from {', '.join(sorted(SWEEPABLE))}")
    values = _parse_values(args.values)
    base = load_config(args.config)
    configs = [(v, base.with_param(args.param, v)) for v in values]
    out = _out_dir(args.out)
    fp_fn = []
    for v, cfg in configs:
        label = _value_label(v)
        results = run_experiment(cfg)
        _write_runs(cfg, results, _out_dir(out / f"{args.param}={label}"))
        for res in results:
            fp_fn.extend(fp_fn_rows(args.param, label, res))
    write_csv(out / "fp_fn.csv", FP_FN_HEADER, fp_fn)
    return EXIT_OK


def _toml_float(v: float) -> str:
    return repr(float(v))


def cmd_fit(args) -> int:
    features = [c.strip() for c in args.features.split(",") if c.strip()]
    if not features:
        raise UsageError("--features is empty")
    categorical = [c.strip() for c in (args.categorical or "").split(",") if c.strip()]
    loaded = load_records(
        args.csv, features, args.group, args.label,
        delimiter=args.delimiter, categorical=categorical, positive_label=args.positive_label,
    )
    records = loaded.records
    if not records:
        raise EmptyInputError("no parseable rows")
    train, _ = split_train(records, args.train_frac, args.seed)
    mapping = fit_score_mapping(train, iterations=args.iterations, learning_rate=args.learning_rate)
    if args.family == "gaussian":
        mapping.squash = False
        kind = GaussianLocation(args.sigma)
    else:
        if args.beta is None:
            raise UsageError("--beta is required for the beta family")
        kind = BetaAlpha(args.beta)

    X = np.array([r.features for r in records], dtype=float)
    s_all = score_all(mapping, X)
    g_all = np.array([r.group for r in records])
    y_all = np.array([r.label for r in records])
    train_ids = {id(r) for r in train}
    in_train = np.array([id(r) in train_ids for r in records])

    lines = [
        "# score mapping: logistic over z-scored features",
        f"# features = {loaded.feature_names}",
        f"# weights = {[float(w) for w in mapping.weights]}",
        f"# intercept = {float(mapping.intercept)!r}",
        f"# mean = {[float(m) for m in mapping.mean]}",
        f"# scale = {[float(s) for s in mapping.scale]}",
        f"# records = {len(records)}, skipped = {loaded.skipped}, train = {len(train)}",
        "",
        "[tau]",
        f"label0 = {_toml_float(args.tau0)}",
        f"label1 = {_toml_float(args.tau1)}",
    ]
    n = len(records)
    for g in sorted(set(g_all.tolist())):
        gm = g_all == g
        lines += [
            "",
            f'[group."{g}"]',
            f"alpha1 = {_toml_float(np.mean(y_all[gm] == 1))}",
            f"weight = {_toml_float(gm.sum() / n)}",
        ]
        for y, tau in ((0, args.tau0), (1, args.tau1)):
            cell = gm & (y_all == y)
            init = fit_distribution(s_all[cell & in_train], kind, tau)
            true = fit_distribution(s_all[cell], kind, tau)
            lines += ["", f'[group."{g}".label{y}]', f'family = "{args.family}"']
            if args.family == "gaussian":
                lines.append(f"sigma = {_toml_float(args.sigma)}")
            else:
                lines.append(f"beta = {_toml_float(args.beta)}")
            lines += [f"true_psi = {_toml_float(true.psi)}", f"init_psi = {_toml_float(init.psi)}"]
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="debias-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the configured debiasing experiment")
    s.add_argument("config")
    s.add_argument("--out", default="out")
    s.add_argument("--seed", type=int, default=None, help="run this seed only")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mdp", help="compare exploration actions in the two-stage model")
    m.add_argument("config")
    m.add_argument("--replications", type=int, default=None)
    m.add_argument("--out", default="out")
    m.set_defaults(func=cmd_mdp)

    w = sub.add_parser("sweep", help="repeat simulate over values of one parameter")
    w.add_argument("config")
    w.add_argument("--param", required=True)
    w.add_argument("--values", required=True, help="comma-separated")
    w.add_argument("--out", default="out")
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="fit a score mapping and per-cell distributions from CSV")
    f.add_argument("--csv", required=True)
    f.add_argument("--features", required=True, help="comma-separated column names")
    f.add_argument("--group", required=True)
    f.add_argument("--label", required=True)
    f.add_argument("--categorical", default="", help="comma-separated subset of --features")
    f.add_argument("--positive-label", default=None)
    f.add_argument("--delimiter", default=",")
    f.add_argument("--family", choices=("gaussian", "beta"), default="beta")
    f.add_argument("--beta", type=float, default=None)
    f.add_argument("--sigma", type=float, default=1.0)
    f.add_argument("--tau", type=float, default=None, help="tau for both labels")
    f.add_argument("--tau0", type=float, default=60.0)
    f.add_argument("--tau1", type=float, default=50.0)
    f.add_argument("--train-frac", type=float, default=0.025)
    f.add_argument("--iterations", type=int, default=5000)
    f.add_argument("--learning-rate", type=float, default=0.1)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "tau", None) is not None:
        args.tau0 = args.tau1 = args.tau
    try:
        return args.func(args)
    except (ConfigError, UsageError, SchemaError, EmptyInputError, DegenerateDataError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
