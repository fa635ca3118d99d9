"""Two-layer graph convolutional network with hand-written gradients and Adam.

Forward pass, with A the symmetrically normalized adjacency:

    H1     = relu(A X W1)
    logits = A H1 W2        (head_propagation=True, default)
    logits =   H1 W2        (head_propagation=False)
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .latent_graph import LatentGraph

CHECKPOINT_FORMAT = "tabgraph-gcn"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NormAdjacency:
    matrix: sp.csr_matrix
    deg: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass
class GcnModel:
    W1: np.ndarray
    W2: np.ndarray
    seed: int | None = None

    @property
    def d(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def c(self) -> int:
        return self.W2.shape[1]

    def copy(self) -> "GcnModel":
        return GcnModel(self.W1.copy(), self.W2.copy(), self.seed)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    patience: int = 10
    max_epochs: int = 200
    hidden_dim: int = 16
    self_loops: bool = True
    head_propagation: bool = True
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.patience < 1 or self.max_epochs < 1 or self.hidden_dim < 1:
            raise ValueError("patience, max_epochs and hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class TrainResult:
    model: GcnModel
    train_loss: list[float]
    val_loss: list[float]
    stopped_epoch: int
    best_epoch: int

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    @property
    def best_train_loss(self) -> float:
        """Training data loss of the returned (best-validation) snapshot."""
        return self.train_loss[self.best_epoch - 1]


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def normalize_adjacency(g: LatentGraph, self_loops: bool = True) -> NormAdjacency:
    n = g.n
    i, j = (g.edges[:, 0], g.edges[:, 1]) if g.n_edges else (np.empty(0, int), np.empty(0, int))
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    if self_loops:
        rows = np.concatenate([rows, np.arange(n)])
        cols = np.concatenate([cols, np.arange(n)])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    a.sort_indices()
    return NormAdjacency(a, deg)


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_model(d: int, h: int, c: int, seed: int) -> GcnModel:
    if min(d, h, c) < 1:
        raise ValueError("model dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    w1 = glorot(d, h, rng)
    w2 = glorot(h, c, rng)
    return GcnModel(w1, w2, seed)


def forward(model: GcnModel, a: NormAdjacency, x, head_propagation: bool = True,
            ax: np.ndarray | None = None, dropout_mask: np.ndarray | None = None):
    """Return ``(logits, cache)``. ``ax`` lets callers reuse a precomputed A @ X."""
    if ax is None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != a.n:
            raise ValueError(f"features have {x.shape[0]} rows, adjacency has {a.n} nodes")
        ax = a.matrix @ x
    if ax.shape[1] != model.d:
        raise ValueError(f"feature dim {ax.shape[1]} != model input dim {model.d}")
    pre = ax @ model.W1
    h1 = np.maximum(pre, 0.0)
    if dropout_mask is not None:
        h1 = h1 * dropout_mask
    if head_propagation:
        ah1 = a.matrix @ h1
        logits = ah1 @ model.W2
    else:
        ah1 = h1
        logits = h1 @ model.W2
    cache = {"a": a, "ax": ax, "pre": pre, "h1": h1, "ah1": ah1,
             "dropout_mask": dropout_mask, "head_propagation": head_propagation}
    return logits, cache


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _mask_index(mask, n: int) -> np.ndarray:
    m = np.asarray(mask)
    idx = np.flatnonzero(m) if m.dtype == bool else m.astype(np.int64)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError("mask index out of range")
    return idx


def data_loss(logits: np.ndarray, labels, mask) -> float:
    idx = _mask_index(mask, logits.shape[0])
    lp = log_softmax(logits[idx])
    return float(-lp[np.arange(idx.size), np.asarray(labels)[idx]].mean())


def loss(logits: np.ndarray, labels, mask, model: GcnModel, weight_decay: float) -> float:
    """Masked mean cross-entropy plus (weight_decay / 2) * squared weight norms."""
    penalty = 0.5 * weight_decay * (np.sum(model.W1 ** 2) + np.sum(model.W2 ** 2))
    return data_loss(logits, labels, mask) + float(penalty)


def backward(cache, labels, mask, model: GcnModel, weight_decay: float):
    """Exact gradients of :func:`loss` with respect to ``(W1, W2)``."""
    a, ax, pre, ah1 = cache["a"], cache["ax"], cache["pre"], cache["ah1"]
    n = pre.shape[0]
    if pre.shape[1] != model.hidden_dim or ah1.shape[1] != model.W2.shape[0]:
        raise ValueError("cache does not match model shapes")
    idx = _mask_index(mask, n)
    logits = ah1 @ model.W2
    g = np.zeros((n, model.c))
    p = softmax(logits[idx])
    p[np.arange(idx.size), np.asarray(labels)[idx]] -= 1.0
    g[idx] = p / idx.size

    dW2 = ah1.T @ g + weight_decay * model.W2
    dh1 = g @ model.W2.T
    if cache["head_propagation"]:
        dh1 = a.matrix.T @ dh1
    if cache["dropout_mask"] is not None:
        dh1 = dh1 * cache["dropout_mask"]
    dpre = dh1 * (pre > 0)
    dW1 = ax.T @ dpre + weight_decay * model.W1
    return dW1, dW2


def adam_step(state: AdamState, model: GcnModel, grads, learning_rate: float) -> GcnModel:
    """Bias-corrected Adam update, applied in place to ``model`` and ``state``."""
    params = [model.W1, model.W2]
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model


def _check_masks(train_mask, val_mask, labels, n: int, c: int):
    tr = _mask_index(train_mask, n)
    va = _mask_index(val_mask, n)
    if np.intersect1d(tr, va).size:
        raise ValueError("train and validation masks overlap")
    present = np.unique(np.asarray(labels)[tr])
    if present.size != c or present[0] != 0 or present[-1] != c - 1:
        missing = sorted(set(range(c)) - set(present.tolist()))
        raise ValueError(f"classes {missing} have no training nodes")
    return tr, va


def train(x, labels, a: NormAdjacency, train_mask, val_mask, cfg: TrainConfig,
          n_classes: int | None = None) -> TrainResult:
    """Full-batch training with validation-loss early stopping.

    Each epoch takes one Adam step on the training loss and then evaluates
    the updated weights. Training stops once the validation data loss has
    not improved for ``cfg.patience`` consecutive epochs; the snapshot from
    the best validation epoch is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    n = x.shape[0]
    c = int(n_classes if n_classes is not None else labels.max() + 1)
    tr, va = _check_masks(train_mask, val_mask, labels, n, c)

    model = init_model(x.shape[1], cfg.hidden_dim, c, cfg.seed)
    state = AdamState()
    drop_rng = np.random.default_rng([cfg.seed, 1])
    ax = a.matrix @ x

    train_hist: list[float] = []
    val_hist: list[float] = []
    best = math.inf
    best_model = model.copy()
    best_epoch = 0
    stale = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        mask = None
        if cfg.dropout > 0:
            keep = 1.0 - cfg.dropout
            mask = (drop_rng.random((n, cfg.hidden_dim)) < keep) / keep
        _, cache = forward(model, a, None, cfg.head_propagation, ax=ax, dropout_mask=mask)
        grads = backward(cache, labels, tr, model, cfg.weight_decay)
        adam_step(state, model, grads, cfg.learning_rate)

        logits, _ = forward(model, a, None, cfg.head_propagation, ax=ax)
        train_hist.append(data_loss(logits, labels, tr))
        vl = data_loss(logits, labels, va)
        val_hist.append(vl)
        if vl < best:
            best = vl
            best_model = model.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainResult(best_model, train_hist, val_hist, epoch, best_epoch)


def predict(model: GcnModel, a: NormAdjacency, x, head_propagation: bool = True):
    """Class probabilities and argmax labels (ties go to the lowest class index)."""
    logits, _ = forward(model, a, x, head_propagation)
    probs = softmax(logits)
    return probs, np.argmax(probs, axis=1)


def save_model(model: GcnModel, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "d": model.d,
        "hidden_dim": model.hidden_dim,
        "c": model.c,
        "seed": model.seed,
        "W1": model.W1.ravel().tolist(),
        "W2": model.W2.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> GcnModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a GCN checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    d, h, c = doc["d"], doc["hidden_dim"], doc["c"]
    w1 = np.array(doc["W1"], dtype=np.float64)
    w2 = np.array(doc["W2"], dtype=np.float64)
    if w1.size != d * h or w2.size != h * c:
        raise ValueError("checkpoint weight sizes do not match declared dimensions")
    return GcnModel(w1.reshape(d, h), w2.reshape(h, c), doc.get("seed"))

