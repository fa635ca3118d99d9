"""Stratified k-fold harness: per-fold latent graphs, threshold selection, training and scoring."""
from __future__ import annotations

import csv
import io
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import baseline
from .data import Dataset, standardize
from .gcn import TrainConfig, TrainResult, normalize_adjacency, predict, train
from .latent_graph import (DEFAULT_QUANTILES, SimilarityMatrix, edge_retention, similarity_matrix,
                           theta_grid, threshold_graph)

METRICS = ("accuracy", "macro_f1", "selected_theta", "edge_retention", "train_seconds", "graph_seconds")
TIMING_FIELDS = ("train_seconds", "graph_seconds")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    keys: np.ndarray  # per-instance random keys; order the validation carve

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def permuted(self, order) -> "FoldPlan":
        order = np.asarray(order)
        return FoldPlan(self.k, self.assignments[order], self.seed, self.keys[order])


class ValidationSplit(NamedTuple):
    fit: np.ndarray
    val: np.ndarray
    fallback: bool


def stratified_kfold(labels, k: int, seed: int, strict: bool = False) -> FoldPlan:
    """Shuffle each class by ``seed`` and deal its members round-robin over the folds.

    The dealing position carries over from one class to the next, so fold
    sizes are balanced overall as well as per class.
    """
    labels = np.asarray(labels)
    n = labels.size
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of instances N={n}")
    classes, counts = np.unique(labels, return_counts=True)
    if strict and counts.min() < k:
        small = classes[counts < k].tolist()
        raise ValueError(f"classes {small} have fewer than k={k} instances")
    rng = np.random.default_rng([seed, 0])
    assignments = np.empty(n, dtype=np.int64)
    pos = 0
    for cls in classes:
        members = rng.permutation(np.flatnonzero(labels == cls))
        assignments[members] = (pos + np.arange(members.size)) % k
        pos = (pos + members.size) % k
    keys = np.random.default_rng([seed, 1]).random(n)
    return FoldPlan(k, assignments, seed, keys)


def carve_validation(train_indices, labels, fraction: float = 0.1, seed: int = 0,
                     keys: np.ndarray | None = None) -> ValidationSplit:
    """Stratified split of a training fold into fit and validation nodes.

    The validation size is ``round(fraction * len(train))`` (at least 1),
    allocated over classes by largest remainder while leaving every class at
    least one fit node. When no class can spare a node the carve falls back
    to a random pick and ``fallback`` is set. Within a class, nodes are
    taken in order of ``keys`` when given, otherwise in a seeded shuffle.
    """
    if not 0.0 < fraction < 0.5:
        raise ValueError("fraction must lie in (0, 0.5)")
    train_indices = np.asarray(train_indices, dtype=np.int64)
    if train_indices.size < 2:
        raise ValueError("need at least 2 training instances to carve a validation set")
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 2])
    target = max(1, int(round(fraction * train_indices.size)))

    y = labels[train_indices]
    classes, counts = np.unique(y, return_counts=True)
    spare = counts - 1
    if spare.sum() == 0:
        warnings.warn("no class can spare a validation node; using a random carve", RuntimeWarning)
        pick = rng.permutation(train_indices.size)[:target]
        val = np.sort(train_indices[pick])
        return ValidationSplit(np.setdiff1d(train_indices, val), val, True)

    target = min(target, int(spare.sum()))
    exact = fraction * counts
    quota = np.minimum(np.floor(exact).astype(np.int64), spare)
    remainder = exact - quota
    while quota.sum() < target:
        open_ = quota < spare
        best = np.flatnonzero(open_)[np.argmax(remainder[open_])]
        quota[best] += 1
        remainder[best] = -np.inf
    while quota.sum() > target:
        best = np.argmax(quota)
        quota[best] -= 1

    val_parts = []
    for cls, q in zip(classes, quota):
        members = train_indices[y == cls]
        if keys is not None:
            members = members[np.argsort(keys[members], kind="stable")]
        else:
            members = rng.permutation(members)
        val_parts.append(members[:q])
    val = np.sort(np.concatenate(val_parts))
    return ValidationSplit(np.setdiff1d(train_indices, val), val, False)


def accuracy(pred, true) -> float:
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("pred and true must be equal-length and non-empty")
    return float(np.mean(pred == true))


def macro_f1(pred, true, n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1 over all classes; a class never predicted nor present scores 0."""
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("pred and true must be equal-length and non-empty")
    c = n_classes if n_classes is not None else int(max(pred.max(), true.max())) + 1
    scores = []
    for k in range(c):
        tp = np.sum((pred == k) & (true == k))
        fp = np.sum((pred == k) & (true != k))
        fn = np.sum((pred != k) & (true == k))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass
class CVConfig:
    k: int = 10
    seed: int = 0
    method: str = "gcn"  # "gcn" or "svd-lr"
    theta: float | str = "auto"  # "auto" or a fixed value in (0, 1]
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    thetas: tuple[float, ...] | None = None  # explicit candidate grid, overrides quantiles
    val_fraction: float = 0.1
    standardize: str = "none"
    strict_folds: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    svd: baseline.BaselineConfig = field(default_factory=baseline.BaselineConfig)
    jobs: int = 1

    def echo(self) -> dict:
        """Config fields that determine results (``jobs`` is excluded)."""
        d = asdict(self)
        d.pop("jobs")
        d["quantiles"] = list(self.quantiles)
        d["thetas"] = list(self.thetas) if self.thetas is not None else None
        return d


@dataclass
class ThetaCandidate:
    theta: float
    edges: int
    retention: float | None
    train_loss: float
    val_loss: float
    stopped_epoch: int
    best_epoch: int
    result: TrainResult = field(repr=False, compare=False)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in
                ("theta", "edges", "retention", "train_loss", "val_loss", "stopped_epoch", "best_epoch")}


@dataclass
class FoldResult:
    fold: int
    n_test: int
    selected_theta: float | None
    edge_retention: float | None
    n_edges: int | None
    accuracy: float
    macro_f1: float
    train_seconds: float
    graph_seconds: float
    val_fallback: bool = False
    candidates: list[ThetaCandidate] = field(default_factory=list, repr=False)
    model: object = field(default=None, repr=False)
    predictions: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "fold": self.fold,
            "n_test": self.n_test,
            "selected_theta": self.selected_theta,
            "edge_retention": self.edge_retention,
            "n_edges": self.n_edges,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "val_fallback": self.val_fallback,
        }
        if timing:
            d["train_seconds"] = self.train_seconds
            d["graph_seconds"] = self.graph_seconds
        return d


def aggregate(per_fold: Sequence[FoldResult]) -> dict:
    out = {}
    for key in METRICS:
        vals = [getattr(f, key) for f in per_fold]
        if any(v is None for v in vals):
            out[key] = {"mean": None, "std": None}
            continue
        arr = np.array(vals, dtype=np.float64)
        std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        out[key] = {"mean": float(np.mean(arr)), "std": std}
    return out


@dataclass
class EvalReport:
    dataset: str
    method: str
    per_fold: list[FoldResult]
    config: dict
    total_seconds: float = 0.0

    @property
    def aggregate(self) -> dict:
        return aggregate(self.per_fold)

    def to_dict(self, timing: bool = True) -> dict:
        agg = self.aggregate
        if not timing:
            agg = {k: v for k, v in agg.items() if k not in TIMING_FIELDS}
        d = {
            "dataset": self.dataset,
            "method": self.method,
            "k": len(self.per_fold),
            "per_fold": [f.to_dict(timing) for f in self.per_fold],
            "aggregate": agg,
            "config": self.config,
        }
        if timing:
            d["total_seconds"] = self.total_seconds
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=False) + "\n"

    def timing_dict(self) -> dict:
        return {
            "total_seconds": self.total_seconds,
            "per_fold": [{"fold": f.fold, "graph_seconds": f.graph_seconds, "train_seconds": f.train_seconds}
                         for f in self.per_fold],
            "aggregate": {k: v for k, v in self.aggregate.items() if k in TIMING_FIELDS},
        }

    def to_csv(self) -> str:
        cols = ["fold", "n_test", "selected_theta", "edge_retention", "n_edges", "accuracy", "macro_f1",
                "train_seconds", "graph_seconds"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for f in self.per_fold:
            d = f.to_dict()
            w.writerow(["" if d[c] is None else d[c] for c in cols])
        agg = self.aggregate
        for stat in ("mean", "std"):
            row = [stat]
            for c in cols[1:]:
                v = agg.get(c, {}).get(stat) if c in agg else None
                row.append("" if v is None else v)
            w.writerow(row)
        return buf.getvalue()


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def candidate_thetas(sm: SimilarityMatrix, cfg: CVConfig) -> list[float]:
    if cfg.theta != "auto":
        return [float(cfg.theta)]
    if cfg.thetas is not None:
        return sorted(set(float(t) for t in cfg.thetas))
    return theta_grid(sm, cfg.quantiles)


def _retention_or_none(sm: SimilarityMatrix, theta: float) -> float | None:
    try:
        return edge_retention(sm, theta)
    except ValueError:
        return None


def select_theta(ds: Dataset, fit_idx, val_idx, candidates: Sequence[float], cfg: TrainConfig,
                 sm: SimilarityMatrix | None = None):
    """Train once per candidate threshold and keep the one with the lowest training loss.

    The loss compared is the training data loss of the early-stopped
    snapshot. Ties go to the larger threshold. Returns the chosen theta, the
    per-candidate diagnostics, and the seconds spent building graphs and
    training respectively.
    """
    if not candidates:
        raise ValueError("no candidate thresholds")
    t0 = time.perf_counter()
    sm = sm if sm is not None else similarity_matrix(ds)
    graph_s = time.perf_counter() - t0
    train_s = 0.0
    diags: list[ThetaCandidate] = []
    usable = 0
    for theta in sorted(candidates):
        t0 = time.perf_counter()
        g = threshold_graph(sm, theta)
        a = normalize_adjacency(g, cfg.self_loops)
        graph_s += time.perf_counter() - t0
        if g.n_edges == 0 and not cfg.self_loops:
            continue
        usable += 1
        t0 = time.perf_counter()
        res = train(ds.features, ds.labels, a, fit_idx, val_idx, cfg, n_classes=ds.c)
        train_s += time.perf_counter() - t0
        diags.append(ThetaCandidate(theta, g.n_edges, _retention_or_none(sm, theta), res.best_train_loss,
                                    res.best_val_loss, res.stopped_epoch, res.best_epoch, res))
    if not usable:
        raise ValueError("every candidate threshold gives an edgeless graph and self-loops are off")
    best = min(diags, key=lambda c: (c.train_loss, -c.theta))
    return best.theta, diags, graph_s, train_s


def run_fold(ds: Dataset, plan: FoldPlan, fold: int, cfg: CVConfig, sm: SimilarityMatrix | None = None) -> FoldResult:
    """Evaluate one fold. Test-node labels are read only when scoring."""
    test_idx = plan.test_index(fold)
    train_idx = plan.train_index(fold)
    seed = fold_seed(cfg.seed, fold)

    if cfg.method == "svd-lr":
        t0 = time.perf_counter()
        probs = baseline.fit_predict(ds.features, ds.labels, train_idx, ds.c, cfg.svd, seed)
        elapsed = time.perf_counter() - t0
        pred = np.argmax(probs[test_idx], axis=1)
        true = ds.labels[test_idx]
        return FoldResult(fold, int(test_idx.size), None, None, None, accuracy(pred, true),
                          macro_f1(pred, true, ds.c), elapsed, 0.0, predictions=pred)
    if cfg.method != "gcn":
        raise ValueError(f"unknown method {cfg.method!r}")

    fit_idx, val_idx, fallback = carve_validation(train_idx, ds.labels, cfg.val_fraction, seed, plan.keys)
    tcfg = replace(cfg.train, seed=seed)
    t0 = time.perf_counter()
    sm = sm if sm is not None else similarity_matrix(ds)
    sim_s = time.perf_counter() - t0
    theta, diags, graph_s, train_s = select_theta(ds, fit_idx, val_idx, candidate_thetas(sm, cfg), tcfg, sm)
    chosen = next(c for c in diags if c.theta == theta)

    t0 = time.perf_counter()
    a = normalize_adjacency(threshold_graph(sm, theta), tcfg.self_loops)
    graph_s += sim_s + time.perf_counter() - t0
    _, pred_all = predict(chosen.result.model, a, ds.features, tcfg.head_propagation)
    pred = pred_all[test_idx]
    true = ds.labels[test_idx]
    return FoldResult(fold, int(test_idx.size), theta, chosen.retention, chosen.edges, accuracy(pred, true),
                      macro_f1(pred, true, ds.c), train_s, graph_s, fallback, diags, chosen.result.model, pred)


def run_cv(ds: Dataset, cfg: CVConfig, plan: FoldPlan | None = None, name: str = "dataset") -> EvalReport:
    """Stratified k-fold evaluation over a transductive latent graph.

    Every fold builds its graph over all N instances (test features take
    part, test labels do not), selects a threshold on its own training
    nodes, trains, and scores the held-out fold. Folds are independent and
    may run on ``cfg.jobs`` threads; results do not depend on the count.
    """
    t_start = time.perf_counter()
    ds = standardize(ds, cfg.standardize)
    if plan is None:
        plan = stratified_kfold(ds.labels, cfg.k, cfg.seed, cfg.strict_folds)

    def one(f: int) -> FoldResult:
        return run_fold(ds, plan, f, cfg)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            per_fold = list(pool.map(one, range(plan.k)))
    else:
        per_fold = [one(f) for f in range(plan.k)]
    return EvalReport(name, cfg.method, per_fold, cfg.echo(), time.perf_counter() - t_start)
