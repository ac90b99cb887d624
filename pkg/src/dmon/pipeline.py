"""Glue between datasets on disk, clustering methods and metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dmon import baselines, model
from dmon.graph import SparseGraph, load_edge_list, load_features, load_labels
from dmon.metrics import MetricsReport

METHODS = ("dmon", "kmeans", "spectral")
LABEL_FILES = ("graph_labels.txt", "labels.txt")


class MissingInputError(ValueError):
    pass


@dataclass
class Dataset:
    graph: SparseGraph
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    config: dict | None = None

    @property
    def synthetic(self) -> bool:
        return self.config is not None


def load_dataset(directory, features_header: bool = False) -> Dataset:
    """Read ``edges.tsv`` plus optional ``features.csv``, labels and ``config.json``.

    The node count comes from the features or labels when present, so
    trailing isolated nodes survive.
    """
    root = Path(directory)
    if not (root / "edges.tsv").is_file():
        raise MissingInputError(f"{root / 'edges.tsv'} not found")
    features = labels = config = None
    if (root / "features.csv").is_file():
        features = load_features(root / "features.csv", header=features_header)
    for name in LABEL_FILES:
        if (root / name).is_file():
            labels = load_labels(root / name)
            break
    if (root / "config.json").is_file():
        config = json.loads((root / "config.json").read_text())
    n = None
    if features is not None:
        n = features.shape[0]
    elif labels is not None:
        n = labels.size
    if features is not None and labels is not None and labels.size != n:
        raise MissingInputError(f"{labels.size} labels for {n} feature rows")
    graph = load_edge_list(root / "edges.tsv", n_hint=n)
    return Dataset(graph, features, labels, config)


@dataclass
class MethodParams:
    k: int = 16
    hidden: int = 512
    epochs: int = 200
    lr: float = 1e-3
    dropout: float = 0.5


def run_method(method: str, graph: SparseGraph, features: np.ndarray | None, params: MethodParams,
               seed: int, history_path=None) -> np.ndarray:
    """One run of ``method``; returns the hard partition."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method in ("dmon", "kmeans") and features is None:
        raise MissingInputError(f"method {method!r} needs node features")
    if method == "kmeans":
        return baselines.kmeans(features, params.k, seed=seed).assignments
    if method == "spectral":
        return baselines.spectral_modularity(graph, params.k, seed=seed)
    labels, result = model.fit_predict(graph, features, k=params.k, hidden=params.hidden,
                                       epochs=params.epochs, lr=params.lr,
                                       dropout_rate=params.dropout, seed=seed)
    if history_path is not None:
        model.write_history(result.history, history_path)
    return labels


def evaluate(graph: SparseGraph, partition: np.ndarray, labels: np.ndarray | None = None) -> MetricsReport:
    return MetricsReport.compute(graph, partition, labels)
