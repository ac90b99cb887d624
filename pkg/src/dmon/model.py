"""Deep Modularity Network: a one-layer GCN with skip connection feeding a
softmax cluster assignment, trained to maximize soft modularity subject to
a collapse penalty on cluster sizes.

The computation graph is fixed, so the backward pass is written out by hand:

    pre    = (A_norm X) W + X W_skip
    H      = selu(pre)
    H'     = dropout(H)
    C      = softmax(H' W_out + b)
    loss   = modularity_loss(C) + collapse_regularizer(C)
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from dmon import nn
from dmon.graph import NormalizedAdjacency, SparseGraph, normalized_adjacency, spmm

logger = logging.getLogger(__name__)

PARAM_NAMES = ("W", "W_skip", "W_out", "b")

# dense feature matrices at or below this fill are multiplied as CSR
SPARSE_FEATURE_DENSITY = 0.05


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, msg: str = "non-finite loss"):
        super().__init__(f"{msg} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class DmonModel:
    """Trainable parameters and the hyperparameters that fix their shapes."""

    params: dict[str, np.ndarray]
    dropout_rate: float = 0.5

    @classmethod
    def init(cls, n_features: int, hidden: int, k: int, dropout_rate: float = 0.5,
             seed: int | np.random.Generator = 0) -> "DmonModel":
        if k < 2:
            raise ValueError("k must be at least 2")
        rng = np.random.default_rng(seed)
        params = {
            "W": nn.glorot_uniform(n_features, hidden, rng),
            "W_skip": nn.glorot_uniform(n_features, hidden, rng),
            "W_out": nn.glorot_uniform(hidden, k, rng),
            "b": np.zeros(k),
        }
        return cls(params=params, dropout_rate=dropout_rate)

    @property
    def n_features(self) -> int:
        return self.params["W"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["W"].shape[1]

    @property
    def k(self) -> int:
        return self.params["W_out"].shape[1]

    def copy(self) -> "DmonModel":
        return DmonModel({k: v.copy() for k, v in self.params.items()}, self.dropout_rate)

    def save(self, path) -> None:
        payload = {
            "dropout_rate": self.dropout_rate,
            "params": {name: {"shape": list(a.shape), "data": a.ravel().tolist()}
                       for name, a in self.params.items()},
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path) -> "DmonModel":
        payload = json.loads(Path(path).read_text())
        params = {name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
                  for name, entry in payload["params"].items()}
        return cls(params=params, dropout_rate=payload["dropout_rate"])


@dataclass
class ForwardCache:
    x: np.ndarray | sp.csr_matrix
    ax: np.ndarray | sp.csr_matrix
    pre: np.ndarray
    hidden: np.ndarray
    mask: np.ndarray | None
    dropped: np.ndarray
    assignments: np.ndarray


def forward(model: DmonModel, adj: NormalizedAdjacency, x: np.ndarray, training: bool = False,
            rng: np.random.Generator | None = None, ax=None):
    """Soft cluster assignments ``C`` (n x k) and the cache for ``backward``.

    ``ax`` may carry a precomputed ``A_norm @ x``; it is constant in training.
    """
    p = model.params
    x = x.tocsr() if sp.issparse(x) else np.asarray(x, dtype=np.float64)
    if x.shape[1] != model.n_features:
        raise ValueError(f"feature width {x.shape[1]} != model input width {model.n_features}")
    if x.shape[0] != adj.shape[0]:
        raise ValueError(f"{x.shape[0]} feature rows for a graph with {adj.shape[0]} nodes")
    if ax is None:
        ax = propagate(adj, x)
    pre = ax @ p["W"] + x @ p["W_skip"]
    hidden = nn.selu(pre)
    dropped, mask = nn.dropout(hidden, model.dropout_rate, rng, training=training)
    c = nn.softmax_rows(dropped @ p["W_out"] + p["b"])
    nn.check_finite(c, "cluster assignments")
    return c, ForwardCache(x, ax, pre, hidden, mask, dropped, c)


def feature_operand(x):
    """Features as float64, converted to CSR when mostly zero (bag-of-words style)."""
    if sp.issparse(x):
        return x.tocsr().astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.size and np.count_nonzero(x) <= SPARSE_FEATURE_DENSITY * x.size:
        return sp.csr_matrix(x)
    return x


def propagate(adj: NormalizedAdjacency, x):
    """``A_norm @ x``; stays sparse only while the product is still mostly zero."""
    if not sp.issparse(x):
        return spmm(adj, x)
    ax = (adj.matrix @ x).tocsr()
    if ax.nnz > SPARSE_FEATURE_DENSITY * ax.shape[0] * ax.shape[1]:
        return ax.toarray()
    return ax


def backward(model: DmonModel, cache: ForwardCache, grad_c: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given ``dL/dC``."""
    p = model.params
    d_logits = nn.softmax_rows_backward(cache.assignments, grad_c)
    grads = {"W_out": cache.dropped.T @ d_logits, "b": d_logits.sum(axis=0)}
    d_hidden = nn.dropout_backward(cache.mask, d_logits @ p["W_out"].T)
    d_pre = nn.selu_backward(cache.pre, d_hidden)
    grads["W"] = cache.ax.T @ d_pre
    grads["W_skip"] = cache.x.T @ d_pre
    return grads


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

@dataclass
class LossBreakdown:
    total: float
    modularity_term: float
    collapse_term: float
    orthogonality: float | None = None


def modularity_loss(g: SparseGraph, c: np.ndarray):
    """Negative soft modularity ``-(1/2m) tr(C^T B C)`` and its gradient in ``C``.

    ``B = A - d d^T / 2m`` is never formed: ``tr(C^T A C)`` uses one sparse
    product and the null-model part only needs the k-vector ``d^T C``.
    """
    if g.m == 0:
        raise ValueError("modularity loss is undefined for a graph with no edges")
    two_m = 2.0 * g.m
    ac = spmm(g, c)
    dc = g.degrees @ c
    value = -(np.sum(c * ac) - dc @ dc / two_m) / two_m
    grad = -(2.0 * ac - (2.0 / two_m) * np.outer(g.degrees, dc)) / two_m
    return float(value), grad


def collapse_regularizer(c: np.ndarray):
    """``sqrt(k)/n * ||column sums of C|| - 1`` and its gradient in ``C``.

    0 for perfectly balanced clusters, ``sqrt(k) - 1`` when everything sits
    in one cluster.
    """
    n, k = c.shape
    sizes = c.sum(axis=0)
    norm = np.linalg.norm(sizes)
    if norm == 0.0:
        raise ValueError("cluster sizes are all zero")
    scale = np.sqrt(k) / n
    value = scale * norm - 1.0
    grad = np.broadcast_to(scale * sizes / norm, c.shape).copy()
    return float(value), grad


def orthogonality_diagnostic(c: np.ndarray) -> float:
    """``||C^T C - I||_F``; logged only, never optimized."""
    gram = c.T @ c
    return float(np.linalg.norm(gram - np.eye(gram.shape[0])))


def loss(g: SparseGraph, c: np.ndarray, with_orthogonality: bool = False):
    mod, g_mod = modularity_loss(g, c)
    col, g_col = collapse_regularizer(c)
    ortho = orthogonality_diagnostic(c) if with_orthogonality else None
    return LossBreakdown(mod + col, mod, col, ortho), g_mod + g_col


def harden(c: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest cluster index."""
    return np.argmax(c, axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    seed: int = 0
    log_every: int = 0


@dataclass
class TrainResult:
    model: DmonModel
    history: list[LossBreakdown] = field(default_factory=list)


def train(model: DmonModel, g: SparseGraph, x: np.ndarray, config: TrainConfig = TrainConfig(),
          adj: NormalizedAdjacency | None = None) -> TrainResult:
    """Full-graph Adam training; ``model`` is updated in place.

    One history entry per epoch, measured on the training-mode forward pass
    that produced that epoch's gradient.
    """
    adj = normalized_adjacency(g) if adj is None else adj
    x = feature_operand(x)
    ax = propagate(adj, x)
    rng = np.random.default_rng(config.seed)
    opt = nn.Adam(lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        try:
            with np.errstate(invalid="ignore", over="ignore"):
                c, cache = forward(model, adj, x, training=True, rng=rng, ax=ax)
                report, grad_c = loss(g, c, with_orthogonality=True)
            if not np.isfinite(report.total):
                raise TrainingDivergedError(epoch)
            history.append(report)
            opt.step(model.params, backward(model, cache, grad_c))
        except nn.NonFiniteError as exc:
            raise TrainingDivergedError(epoch, str(exc)) from exc
        if config.log_every and (epoch + 1) % config.log_every == 0:
            logger.info("epoch %d loss %.5f modularity %.5f collapse %.5f", epoch + 1,
                        report.total, report.modularity_term, report.collapse_term)
    return TrainResult(model, history)


def predict(model: DmonModel, g: SparseGraph, x: np.ndarray) -> np.ndarray:
    """Eval-mode soft assignments."""
    c, _ = forward(model, normalized_adjacency(g), x, training=False)
    return c


def fit_predict(g: SparseGraph, x: np.ndarray, k: int, hidden: int = 64, epochs: int = 200,
                lr: float = 1e-3, dropout_rate: float = 0.5, seed: int = 0):
    """Initialize, train, and return ``(hard partition, TrainResult)``."""
    seeds = np.random.SeedSequence(seed).spawn(2)
    model = DmonModel.init(x.shape[1], hidden, k, dropout_rate=dropout_rate,
                           seed=np.random.default_rng(seeds[0]))
    adj = normalized_adjacency(g)
    x = feature_operand(x)
    result = train(model, g, x, TrainConfig(epochs=epochs, lr=lr,
                                             seed=int(seeds[1].generate_state(1)[0])), adj=adj)
    c, _ = forward(result.model, adj, x, training=False)
    return harden(c), result


def write_history(history: list[LossBreakdown], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "total", "modularity_term", "collapse_term", "orthogonality"])
        for i, h in enumerate(history, start=1):
            w.writerow([i, repr(h.total), repr(h.modularity_term), repr(h.collapse_term),
                        "" if h.orthogonality is None else repr(h.orthogonality)])
