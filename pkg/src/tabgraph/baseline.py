"""Latent-space baseline: randomized truncated SVD of all rows, softmax regression on labeled rows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gcn import log_softmax, softmax


@dataclass(frozen=True)
class SvdProjection:
    components: np.ndarray  # D x r, orthonormal columns
    singular_values: np.ndarray

    @property
    def rank(self) -> int:
        return self.components.shape[1]


@dataclass
class BaselineConfig:
    rank: int | None = None  # None -> min(64, N - 1, D)
    oversample: int = 10
    power_iters: int = 2
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 500


def randomized_svd(x, rank: int, oversample: int = 10, power_iters: int = 2, seed: int = 0) -> SvdProjection:
    """Gaussian range sketch, QR-stabilized subspace iterations, then an exact SVD of the small projected matrix."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if not 1 <= rank <= min(n, d):
        raise ValueError(f"rank must lie in [1, {min(n, d)}], got {rank}")
    rng = np.random.default_rng(seed)
    width = min(rank + oversample, n, d)
    omega = rng.standard_normal((d, width))
    q, _ = np.linalg.qr(x @ omega)
    for _ in range(power_iters):
        z, _ = np.linalg.qr(x.T @ q)
        q, _ = np.linalg.qr(x @ z)
    b = q.T @ x
    _, s, vt = np.linalg.svd(b, full_matrices=False)
    return SvdProjection(vt[:rank].T.copy(), s[:rank].copy())


def project(p: SvdProjection, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != p.components.shape[0]:
        raise ValueError(f"expected {p.components.shape[0]} columns, got {x.shape[1]}")
    return x @ p.components


def _with_bias(z: np.ndarray) -> np.ndarray:
    return np.hstack([z, np.ones((z.shape[0], 1))])


def softmax_regression_loss(w, z, labels, mask, l2: float) -> float:
    idx = np.asarray(mask)
    idx = np.flatnonzero(idx) if idx.dtype == bool else idx
    lp = log_softmax(_with_bias(z[idx]) @ w)
    # the bias row is not penalized
    return float(-lp[np.arange(idx.size), labels[idx]].mean() + 0.5 * l2 * np.sum(w[:-1] ** 2))


def softmax_regression_grad(w, z, labels, mask, l2: float) -> np.ndarray:
    idx = np.asarray(mask)
    idx = np.flatnonzero(idx) if idx.dtype == bool else idx
    zb = _with_bias(z[idx])
    p = softmax(zb @ w)
    p[np.arange(idx.size), labels[idx]] -= 1.0
    g = zb.T @ p / idx.size
    g[:-1] += l2 * w[:-1]
    return g


def softmax_regression_train(z, labels, mask, n_classes: int, lr: float = 0.1, l2: float = 1e-4,
                             epochs: int = 500, seed: int = 0) -> np.ndarray:
    """Full-batch gradient descent from zero weights; returns an (r + 1) x C matrix whose last row is the bias.

    Zero initialization makes the fit deterministic, so ``seed`` only keeps
    the signature uniform with the other learners.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    idx = np.asarray(mask)
    idx = np.flatnonzero(idx) if idx.dtype == bool else idx.astype(np.int64)
    if idx.size == 0:
        raise ValueError("mask selects no rows")
    missing = set(range(n_classes)) - set(labels[idx].tolist())
    if missing:
        raise ValueError(f"classes {sorted(missing)} have no labeled rows")
    w = np.zeros((z.shape[1] + 1, n_classes))
    for _ in range(epochs):
        w -= lr * softmax_regression_grad(w, z, labels, idx, l2)
    return w


def softmax_regression_predict(w, z) -> np.ndarray:
    return softmax(_with_bias(np.asarray(z, dtype=np.float64)) @ w)


def default_rank(n: int, d: int) -> int:
    return max(1, min(64, n - 1, d))


def fit_predict(x, labels, train_idx, n_classes: int, cfg: BaselineConfig, seed: int):
    """Project every row, scale the coordinates, fit the head on ``train_idx``; return test-ready probabilities for all rows.

    The projection and the coordinate scaling see all rows but never any
    label; only the head touches labels, and only those in ``train_idx``.
    """
    x = np.asarray(x, dtype=np.float64)
    rank = cfg.rank or default_rank(*x.shape)
    proj = randomized_svd(x, rank, cfg.oversample, cfg.power_iters, seed)
    z = project(proj, x)
    sd = z.std(axis=0)
    z = (z - z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    w = softmax_regression_train(z, labels, train_idx, n_classes, cfg.learning_rate, cfg.l2, cfg.epochs, seed)
    return softmax_regression_predict(w, z)
