"""Command-line entry point: synth, run, sweep, stats, compare.

Exit codes: 0 success, 1 runtime error, 2 usage error. A ``--config FILE``
of ``key = value`` lines (keys are long option names) supplies defaults;
flags given on the command line take precedence.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import BaselineConfig
from .data import load_csv, standardize, synth_blobs, write_csv
from .evaluation import CVConfig, run_cv, run_fold, stratified_kfold
from .gcn import TrainConfig, save_model
from .graph_stats import stats_report
from .latent_graph import DEFAULT_QUANTILES, similarity_matrix, theta_grid, threshold_graph, write_edge_list
from .stats_tests import (ScoreTable, bayesian_correlated_ttest, friedman_ranks, nemenyi_cd,
                          significance_matrix)


class CliError(Exception):
    pass


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _theta_mode(text: str):
    if text == "auto":
        return "auto"
    value = text.split(":", 1)[1] if text.startswith("fixed:") else text
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"theta must be 'auto' or 'fixed:<value>', got {text!r}") from None
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"fixed theta must lie in (0, 1], got {v}")
    return v


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--label-column", default="label")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--standardize", choices=["none", "zscore"], default="none")
    p.add_argument("--strict", action="store_true", help="reject classes with fewer than 2 instances")


def _add_cv_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quantiles", type=_floats, default=DEFAULT_QUANTILES,
                   help="quantile levels of positive similarities used as candidate thresholds")
    p.add_argument("--thetas", type=_floats, default=None, help="explicit candidate thresholds")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--no-self-loops", action="store_true")
    p.add_argument("--no-head-propagation", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="folds evaluated concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a Gaussian-blob fixture CSV")
    p.add_argument("--n", type=int, default=120)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--c", type=int, default=3)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--label-column", default="label")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="k-fold evaluation; writes JSON and CSV reports")
    _add_data_args(p)
    _add_cv_args(p)
    p.add_argument("--method", choices=["gcn", "svd-lr"], default="gcn")
    p.add_argument("--theta", type=_theta_mode, default="auto", help="'auto' or 'fixed:<value>'")
    p.add_argument("--svd-rank", type=int, default=None)
    p.add_argument("--out", required=True, help="output prefix; writes <out>.json, <out>.csv, <out>.timing.json")
    p.add_argument("--save-models", default=None, help="directory for per-fold GCN checkpoints")

    p = sub.add_parser("sweep", help="per-fold, per-threshold training diagnostics as CSV")
    _add_data_args(p)
    _add_cv_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="latent graph statistics of the full dataset at one threshold")
    _add_data_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta", type=float)
    g.add_argument("--quantile", type=float, help="threshold at this quantile of positive similarities")
    p.add_argument("--out", default=None, help="JSON path (stdout when omitted)")
    p.add_argument("--edges", default=None, help="also export the edge list here")

    p = sub.add_parser("compare", help="Friedman ranks, Nemenyi CD and Bayesian correlated t-tests")
    p.add_argument("--scores", required=True, help="CSV: methods x datasets")
    p.add_argument("--alpha", type=float, choices=[0.05, 0.01], default=0.05)
    p.add_argument("--folds", default=None, help="CSV of per-fold scores, one column per method")
    p.add_argument("--pair", action="append", default=[], help="METHOD_A,METHOD_B (repeatable)")
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--rope", type=float, default=0.01)
    p.add_argument("--out", default=None, help="JSON path (stdout when omitted)")
    p.add_argument("--ranks-csv", default=None, help="plot-ready average ranks")

    for sp in sub.choices.values():
        sp.add_argument("--config", default=None, help="key = value defaults file")
    parser.subcommands = sub.choices
    return parser


def read_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    path = _config_path(argv)
    if path and command in parser.subcommands:
        sp = parser.subcommands[command]
        actions = {a.dest: a for a in sp._actions}  # noqa: SLF001
        defaults = {}
        for key, value in read_config(path).items():
            action = actions.get(key)
            if action is None or key == "config":
                raise CliError(f"{path}: unknown key {key!r} for '{command}'")
            try:
                if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
                    defaults[key] = value.lower() in ("1", "true", "yes", "on")
                else:
                    defaults[key] = action.type(value) if action.type else value
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise CliError(f"{path}: bad value for {key!r}: {exc}") from None
            action.required = False
        sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _load(args):
    return load_csv(args.data, args.label_column, args.delimiter, strict=args.strict)


def _cv_config(args, method: str = "gcn", theta="auto") -> CVConfig:
    train = TrainConfig(learning_rate=args.lr, weight_decay=args.weight_decay, patience=args.patience,
                        max_epochs=args.max_epochs, hidden_dim=args.hidden, self_loops=not args.no_self_loops,
                        head_propagation=not args.no_head_propagation, dropout=args.dropout)
    svd = BaselineConfig(rank=getattr(args, "svd_rank", None))
    return CVConfig(k=args.k, seed=args.seed, method=method, theta=theta, quantiles=tuple(args.quantiles),
                    thetas=tuple(args.thetas) if args.thetas else None, val_fraction=args.val_fraction,
                    standardize=args.standardize, train=train, svd=svd, jobs=args.jobs)


def cmd_synth(args) -> int:
    ds = synth_blobs(args.n, args.d, args.c, args.separation, args.seed)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, path, args.label_column)
    print(f"wrote {path} (n={ds.n}, d={ds.d}, c={ds.c})")
    return 0


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    ds = _load(args)
    cfg = _cv_config(args, args.method, args.theta)
    report = run_cv(ds, cfg, name=Path(args.data).stem)
    report.total_seconds = time.perf_counter() - t0
    out = Path(args.out)
    atomic_write(out.with_name(out.name + ".json"), report.to_json(timing=False))
    atomic_write(out.with_name(out.name + ".csv"), report.to_csv())
    atomic_write(out.with_name(out.name + ".timing.json"), json.dumps(report.timing_dict(), indent=2) + "\n")
    if args.save_models and args.method == "gcn":
        mdir = Path(args.save_models)
        mdir.mkdir(parents=True, exist_ok=True)
        for f in report.per_fold:
            save_model(f.model, mdir / f"fold{f.fold:02d}.json")
    agg = report.aggregate
    theta = agg["selected_theta"]["mean"]
    theta_txt = "n/a" if theta is None else f"{theta:.4f}"
    print(f"{report.dataset} {report.method}: accuracy {agg['accuracy']['mean']:.4f}±{agg['accuracy']['std']:.4f} "
          f"macro_f1 {agg['macro_f1']['mean']:.4f}±{agg['macro_f1']['std']:.4f} "
          f"theta {theta_txt} time {report.total_seconds:.2f}s")
    return 0


SWEEP_COLUMNS = ("fold", "theta", "edges", "retention", "train_loss", "val_loss", "stopped_epoch", "best_epoch",
                 "selected")


def sweep_rows(ds, cfg: CVConfig) -> list[dict]:
    ds = standardize(ds, cfg.standardize)
    plan = stratified_kfold(ds.labels, cfg.k, cfg.seed, cfg.strict_folds)
    sm = similarity_matrix(ds)
    rows = []
    for fold in range(plan.k):
        res = run_fold(ds, plan, fold, cfg, sm)
        for cand in res.candidates:
            rows.append({"fold": fold, **cand.row(), "selected": cand.theta == res.selected_theta})
    return rows


def cmd_sweep(args) -> int:
    ds = _load(args)
    rows = sweep_rows(ds, _cv_config(args))
    buf = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        buf.append(",".join("" if r[c] is None else repr(float(r[c])) if isinstance(r[c], float) else str(r[c])
                            for c in SWEEP_COLUMNS))
    atomic_write(args.out, "\n".join(buf) + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_stats(args) -> int:
    ds = standardize(_load(args), args.standardize)
    sm = similarity_matrix(ds)
    theta = args.theta if args.theta is not None else theta_grid(sm, [args.quantile])[0]
    g = threshold_graph(sm, theta)
    text = stats_report(g, ds.labels)
    if args.edges:
        write_edge_list(g, sm, args.edges)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def read_score_table(path) -> ScoreTable:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise CliError(f"{path}: need a header row and at least 2 method rows")
    datasets = tuple(rows[0][1:])
    methods, scores = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(rows[0]):
            raise CliError(f"{path}: row {i} has {len(row)} cells, header has {len(rows[0])}")
        vals = []
        for j, cell in enumerate(row[1:], start=2):
            try:
                vals.append(float(cell))
            except ValueError:
                raise CliError(f"{path}: row {i}, column {j}: cannot parse {cell!r}") from None
        methods.append(row[0])
        scores.append(vals)
    return ScoreTable(tuple(methods), datasets, np.array(scores))


def read_fold_scores(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise CliError(f"{path}: need a header row and at least 2 folds")
    header = rows[0]
    cols: dict[str, list[float]] = {h: [] for h in header}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CliError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        for j, (h, cell) in enumerate(zip(header, row), start=1):
            try:
                cols[h].append(float(cell))
            except ValueError:
                raise CliError(f"{path}: row {i}, column {j}: cannot parse {cell!r}") from None
    return {h: np.array(v) for h, v in cols.items()}


def compare_tables(table: ScoreTable, alpha: float, folds=None, pairs=(), rho=0.1, rope=0.01) -> dict:
    ranks = friedman_ranks(table)
    m, nd = table.scores.shape
    cd = nemenyi_cd(m, nd, alpha)
    sig = significance_matrix(ranks, cd)
    out = {
        "methods": list(table.methods),
        "datasets": list(table.datasets),
        "alpha": alpha,
        "average_ranks": {name: float(r) for name, r in zip(table.methods, ranks)},
        "critical_distance": cd,
        "significant": [[bool(v) for v in row] for row in sig],
        "significant_pairs": [[table.methods[i], table.methods[j]]
                              for i in range(m) for j in range(i + 1, m) if sig[i, j]],
    }
    if pairs:
        if folds is None:
            raise CliError("--pair needs --folds")
        bayes = []
        for a, b in pairs:
            for name in (a, b):
                if name not in folds:
                    raise CliError(f"method {name!r} not found in fold scores")
            res = bayesian_correlated_ttest(folds[a] - folds[b], rho, rope)
            bayes.append({"first": a, "second": b, **res.as_dict()})
        out["bayesian"] = bayes
    return out


def cmd_compare(args) -> int:
    table = read_score_table(args.scores)
    folds = read_fold_scores(args.folds) if args.folds else None
    pairs = []
    for p in args.pair:
        parts = p.split(",")
        if len(parts) != 2:
            raise CliError(f"--pair expects METHOD_A,METHOD_B, got {p!r}")
        pairs.append((parts[0], parts[1]))
    out = compare_tables(table, args.alpha, folds, pairs, args.rho, args.rope)
    text = json.dumps(out, indent=2) + "\n"
    if args.ranks_csv:
        lines = ["method,average_rank"] + [f"{k},{v!r}" for k, v in out["average_ranks"].items()]
        atomic_write(args.ranks_csv, "\n".join(lines) + "\n")
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "sweep": cmd_sweep, "stats": cmd_stats, "compare": cmd_compare}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"tabgraph: error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # one-line diagnostic, no traceback
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"tabgraph {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
