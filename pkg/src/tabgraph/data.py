"""Tabular datasets: CSV ingestion, optional scaling, and a Gaussian-blob fixture generator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised when input data violates the dataset contract."""


@dataclass(frozen=True)
class Dataset:
    """Instance-by-feature matrix with dense integer class labels.

    Arrays are made read-only on construction so a dataset can be shared
    between concurrent fold workers.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        n, d = x.shape
        if n < 2 or d < 1:
            raise DataError(f"need N >= 2 and D >= 1, got N={n}, D={d}")
        if y.shape != (n,):
            raise DataError(f"labels shape {y.shape} does not match N={n}")
        if not np.all(np.isfinite(x)):
            r, col = np.argwhere(~np.isfinite(x))[0]
            raise DataError(f"non-finite feature at row {r}, column {col}")
        c = len(self.class_names)
        if c < 2:
            raise DataError(f"need at least 2 classes, got {c}")
        if y.min() < 0 or y.max() >= c:
            raise DataError(f"labels must lie in [0, {c})")
        counts = np.bincount(y, minlength=c)
        if np.any(counts == 0):
            missing = [self.class_names[i] for i in np.flatnonzero(counts == 0)]
            raise DataError(f"classes without instances: {missing}")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(d))
        if len(names) != d:
            raise DataError(f"{len(names)} feature names for {d} features")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(str(s) for s in self.class_names))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def c(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, labels, self.class_names, self.feature_names)

    def permuted(self, order: Sequence[int]) -> "Dataset":
        order = np.asarray(order)
        return Dataset(self.features[order], self.labels[order], self.class_names, self.feature_names)


def load_csv(path, label_column: str, delimiter: str = ",", strict: bool = False) -> Dataset:
    """Read a header-first CSV with one label column and numeric features.

    Labels are mapped to indices in order of first appearance. With
    ``strict`` every class must have at least two instances.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        hits = [j for j, name in enumerate(header) if name == label_column]
        if not hits:
            raise DataError(f"label column {label_column!r} not found in {path}")
        if len(hits) > 1:
            raise DataError(f"label column {label_column!r} appears {len(hits)} times")
        li = hits[0]
        feature_names = tuple(h for j, h in enumerate(header) if j != li)

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {r} has {len(row)} cells, header has {len(header)}")
            values = []
            for j, cell in enumerate(row):
                if j == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"unparseable cell {cell!r} at row {r}, column {header[j]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"non-finite cell {cell!r} at row {r}, column {header[j]!r}")
                values.append(v)
            rows.append(values)
            raw_labels.append(row[li])

    index: dict[str, int] = {}
    labels = [index.setdefault(s, len(index)) for s in raw_labels]
    if strict:
        counts = np.bincount(labels, minlength=len(index))
        small = [name for name, i in index.items() if counts[i] < 2]
        if small:
            raise DataError(f"classes with fewer than 2 instances: {small}")
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    return Dataset(features, np.array(labels, dtype=np.int64), tuple(index), feature_names)


def write_csv(ds: Dataset, path, label_column: str = "label", delimiter: str = ",") -> None:
    # repr() of a Python float round-trips exactly
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([*ds.feature_names, label_column])
        for row, y in zip(ds.features.tolist(), ds.labels.tolist()):
            writer.writerow([*map(repr, row), ds.class_names[y]])


def standardize(ds: Dataset, mode: str = "none") -> Dataset:
    """Per-feature z-scoring (population std); constant features become zero."""
    if mode == "none":
        return ds
    if mode != "zscore":
        raise ValueError(f"unknown standardize mode {mode!r}")
    x = ds.features
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    z = np.zeros_like(x)
    ok = sd > 0
    z[:, ok] = (x[:, ok] - mu[ok]) / sd[ok]
    return Dataset(z, ds.labels, ds.class_names, ds.feature_names)


def blob_centers(d: int, c: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """``c`` points in R^d, every pair at least ``separation`` apart.

    With d >= c they sit on a random orthonormal frame scaled so each pair
    is exactly ``separation`` apart; otherwise they are spaced along a
    random line.
    """
    if d >= c:
        q, _ = np.linalg.qr(rng.standard_normal((d, c)))
        return q.T * (separation / math.sqrt(2.0))
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    return np.outer(np.arange(c) * separation, u)


def synth_blobs(n: int, d: int, c: int, separation: float, seed: int) -> Dataset:
    """Unit-variance isotropic Gaussian clusters around :func:`blob_centers`, balanced to within one instance."""
    if c < 2 or n < c or d < 1 or not separation > 0:
        raise DataError(f"infeasible blob parameters n={n}, d={d}, c={c}, separation={separation}")
    rng = np.random.default_rng(seed)
    centers = blob_centers(d, c, separation, rng)
    labels = rng.permutation(np.arange(n) % c)
    x = centers[labels] + rng.standard_normal((n, d))
    return Dataset(x, labels, tuple(f"class_{k}" for k in range(c)))
