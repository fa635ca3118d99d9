"""Cosine similarity between instances and the thresholded latent graph built from it."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset

DEFAULT_QUANTILES = (0.80, 0.85, 0.875, 0.90, 0.925, 0.95)


@dataclass(frozen=True)
class SimilarityMatrix:
    scores: np.ndarray

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def pair_values(self) -> np.ndarray:
        """Upper-triangle (i < j) scores in row-major pair order."""
        iu = np.triu_indices(self.n, k=1)
        return self.scores[iu]

    def positive_pairs(self) -> np.ndarray:
        v = self.pair_values()
        return v[v > 0]


@dataclass(frozen=True)
class LatentGraph:
    """Undirected unweighted graph; ``edges`` is an (E, 2) array with i < j, lexicographically sorted."""

    n: int
    edges: np.ndarray
    theta: float | None = None

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.n_edges:
            i, j = self.edges.T
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges.tolist():
            nb[i].append(j)
            nb[j].append(i)
        return nb

    @classmethod
    def from_edges(cls, n: int, edges, theta: float | None = None) -> "LatentGraph":
        """Canonicalize an arbitrary edge iterable (drops self-loops and duplicates)."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError(f"edge endpoint outside [0, {n})")
        e = np.sort(e, axis=1)
        e = e[e[:, 0] != e[:, 1]]
        e = np.unique(e, axis=0) if e.size else e
        return cls(n, e, theta)


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size == 0:
        raise ValueError(f"need equal-length non-empty vectors, got {u.shape} and {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(min(1.0, max(-1.0, np.dot(u, v) / (nu * nv))))


def similarity_matrix(ds: Dataset | np.ndarray) -> SimilarityMatrix:
    """All-pairs cosine similarity; zero rows score 0 against everything.

    Only the upper triangle is kept from the product and mirrored, so the
    result is bitwise symmetric.
    """
    x = ds.features if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    xn = x / safe[:, None]
    s = np.triu(xn @ xn.T)
    s = s + np.triu(s, k=1).T
    np.clip(s, -1.0, 1.0, out=s)
    zero = norms == 0
    s[zero, :] = 0.0
    s[:, zero] = 0.0
    s.flags.writeable = False
    return SimilarityMatrix(s)


def _check_theta(theta: float) -> None:
    if not (0.0 < theta <= 1.0):
        raise ValueError(f"theta must lie in (0, 1], got {theta}")


def threshold_graph(sm: SimilarityMatrix, theta: float) -> LatentGraph:
    """Keep every pair i < j whose similarity is at least ``theta``."""
    _check_theta(theta)
    i, j = np.triu_indices(sm.n, k=1)
    keep = sm.scores[i, j] >= theta
    edges = np.stack([i[keep], j[keep]], axis=1).astype(np.int64)
    return LatentGraph(sm.n, edges, float(theta))


def edge_retention(sm: SimilarityMatrix, theta: float) -> float:
    """Fraction of the positive-similarity graph's edges surviving ``theta``."""
    _check_theta(theta)
    pos = sm.positive_pairs()
    if pos.size == 0:
        raise ValueError("the positive-similarity graph has no edges; retention undefined")
    return float(np.count_nonzero(pos >= theta) / pos.size)


def theta_grid(sm: SimilarityMatrix, quantiles: Sequence[float] = DEFAULT_QUANTILES) -> list[float]:
    """Candidate thresholds at empirical quantiles of the positive pair similarities.

    Level q targets keeping a fraction 1 - q of the m positive pairs. The
    kept count round((1 - q) * m) is clamped to the band spanned by the
    outermost levels, so every candidate's retention stays inside
    [1 - max(q), 1 - min(q)] whenever that band holds an integer count.
    The threshold is the midpoint between the largest dropped value and the
    smallest kept one (the plain median for a single level of 0.5).
    """
    q = np.asarray(quantiles, dtype=np.float64)
    if q.ndim != 1 or q.size == 0 or np.any((q <= 0) | (q >= 1)) or np.any(np.diff(q) <= 0):
        raise ValueError("quantiles must be strictly increasing values in (0, 1)")
    pos = np.sort(sm.positive_pairs())
    m = pos.size
    if m == 0:
        raise ValueError("no positive similarities to build a threshold grid from")
    lo = math.ceil((1.0 - q[-1]) * m - 1e-9)
    hi = math.floor((1.0 - q[0]) * m + 1e-9)
    out: list[float] = []
    for level in q:
        keep = math.floor((1.0 - level) * m + 0.5)
        if lo <= hi:
            keep = min(max(keep, lo), hi)
        k = m - min(max(keep, 1), m)
        t = pos[0] if k == 0 else 0.5 * (pos[k - 1] + pos[k])
        t = float(min(t, 1.0))
        if not out or t > out[-1]:
            out.append(t)
    return out


def write_edge_list(g: LatentGraph, sm: SimilarityMatrix, path) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"# n={g.n} theta={g.theta!r}\n")
        for i, j in g.edges.tolist():
            fh.write(f"{i}\t{j}\t{float(sm.scores[i, j])!r}\n")


def read_edge_list(path) -> LatentGraph:
    with Path(path).open() as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# n=... theta=...' header")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        edges = [tuple(map(int, line.split("\t")[:2])) for line in fh if line.strip()]
    theta = None if meta.get("theta") in (None, "None") else float(meta["theta"])
    return LatentGraph.from_edges(int(meta["n"]), edges, theta)
