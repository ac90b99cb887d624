"""Clustering quality metrics.

Graph metrics (modularity, conductance) read the partition against the graph;
label metrics (NMI, pairwise F1) compare two partitions. All label metrics are
computed from a contingency table, so they scale to large ``n``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from dmon.graph import SparseGraph


class UndefinedMetricError(ValueError):
    pass


def as_partition(p, n: int | None = None) -> np.ndarray:
    p = np.asarray(p)
    if p.ndim != 1:
        raise ValueError("partition must be a 1-D vector of cluster ids")
    if p.size and p.min() < 0:
        raise ValueError("cluster ids must be non-negative")
    if n is not None and p.size != n:
        raise ValueError(f"partition length {p.size} != n={n}")
    return p.astype(np.int64, copy=False)


def _cluster_stats(g: SparseGraph, p: np.ndarray):
    """Per-cluster (internal edge ends, degree volume) over ids 0..max(p)."""
    k = int(p.max()) + 1 if p.size else 0
    coo = g.adjacency.tocoo()
    same = p[coo.row] == p[coo.col]
    internal_ends = np.bincount(p[coo.row[same]], minlength=k).astype(np.float64)
    volume = np.bincount(p, weights=g.degrees, minlength=k)
    return internal_ends, volume


def modularity(g: SparseGraph, p) -> float:
    """Newman modularity of a hard partition.

    ``Q = sum_c [ internal_ends_c / 2m - (vol_c / 2m)^2 ]``
    """
    p = as_partition(p, g.n)
    if g.m == 0:
        raise UndefinedMetricError("modularity is undefined for a graph with no edges")
    two_m = 2.0 * g.m
    internal_ends, volume = _cluster_stats(g, p)
    return float(np.sum(internal_ends / two_m - (volume / two_m) ** 2))


def brute_force_modularity(g: SparseGraph, p) -> float:
    """Literal double sum over ordered node pairs; test oracle for small graphs."""
    p = as_partition(p, g.n)
    if g.n > 2000:
        raise ValueError("brute_force_modularity is limited to n <= 2000")
    if g.m == 0:
        raise UndefinedMetricError("modularity is undefined for a graph with no edges")
    a = g.to_dense()
    d = g.degrees
    two_m = 2.0 * g.m
    total = 0.0
    for i in range(g.n):
        for j in range(g.n):
            if p[i] == p[j]:
                total += a[i, j] - d[i] * d[j] / two_m
    return total / two_m


def mean_conductance(g: SparseGraph, p) -> float:
    """Unweighted mean of ``cut(S) / (2 m_S + cut(S))`` over non-empty clusters.

    A cluster with no incident edges contributes 0.
    """
    p = as_partition(p, g.n)
    if g.n == 0:
        return 0.0
    internal_ends, volume = _cluster_stats(g, p)
    sizes = np.bincount(p, minlength=volume.size)
    nonempty = sizes > 0
    cut = volume - internal_ends
    # 2 m_S + cut(S) is exactly the volume
    vol = volume[nonempty]
    phi = np.divide(cut[nonempty], vol, out=np.zeros_like(vol), where=vol > 0)
    return float(phi.mean())


def contingency(pred, truth) -> np.ndarray:
    pred = as_partition(pred)
    truth = as_partition(truth)
    if pred.size != truth.size:
        raise ValueError("partitions must have equal length")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = sp.coo_matrix((np.ones(pred.size), (pi, ti)),
                          shape=(pi.max() + 1 if pi.size else 0, ti.max() + 1 if ti.size else 0))
    return table.toarray()


def _entropy(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    prob = counts / counts.sum()
    return float(-np.sum(prob * np.log(prob)))


def nmi(pred, truth) -> float:
    """Normalized mutual information, arithmetic-mean normalization, natural log."""
    table = contingency(pred, truth)
    n = table.sum()
    if n == 0:
        return 1.0
    h_pred = _entropy(table.sum(axis=1))
    h_truth = _entropy(table.sum(axis=0))
    if h_pred == 0.0 and h_truth == 0.0:
        return 1.0
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    rows, cols = np.nonzero(table)
    nij = table[rows, cols]
    a = table.sum(axis=1)[rows]
    b = table.sum(axis=0)[cols]
    mi = float(np.sum(nij / n * (np.log(nij) + np.log(n) - np.log(a) - np.log(b))))
    score = mi / (0.5 * (h_pred + h_truth))
    return float(min(max(score, 0.0), 1.0))


def _pairs(x: np.ndarray) -> float:
    return float(np.sum(x * (x - 1) / 2.0))


def pairwise_f1(pred, truth) -> float:
    """F1 over unordered node pairs, a pair being positive when co-clustered."""
    table = contingency(pred, truth)
    tp = _pairs(table)
    pred_pos = _pairs(table.sum(axis=1))
    true_pos = _pairs(table.sum(axis=0))
    if tp == 0.0:
        return 0.0
    precision = tp / pred_pos
    recall = tp / true_pos
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

REPORT_FIELDS = ("conductance", "modularity", "nmi", "f1")


@dataclass
class MetricsReport:
    """Clustering metrics on the x100 scale; label metrics may be missing."""

    conductance: float
    modularity: float
    nmi: float | None = None
    f1: float | None = None

    @classmethod
    def compute(cls, g: SparseGraph, pred, truth=None) -> "MetricsReport":
        pred = as_partition(pred, g.n)
        report = cls(conductance=100.0 * mean_conductance(g, pred),
                     modularity=100.0 * modularity(g, pred))
        if truth is not None:
            report.nmi = 100.0 * nmi(pred, truth)
            report.f1 = 100.0 * pairwise_f1(pred, truth)
        return report

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        writer.writerow(["" if getattr(self, f) is None else f"{getattr(self, f):.1f}"
                         for f in REPORT_FIELDS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if len(rows) != 1:
            raise ValueError("expected exactly one data row")
        row = rows[0]
        return cls(**{f: (float(row[f]) if row[f] != "" else None) for f in REPORT_FIELDS})

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        data = json.loads(text)
        return cls(**{f: data.get(f) for f in REPORT_FIELDS})


def aggregate(reports: list[MetricsReport]) -> tuple[MetricsReport, MetricsReport]:
    """Mean and standard deviation across runs, field by field."""
    mean, std = {}, {}
    for f in REPORT_FIELDS:
        vals = [getattr(r, f) for r in reports if getattr(r, f) is not None]
        mean[f] = float(np.mean(vals)) if vals else None
        std[f] = float(np.std(vals)) if vals else None
    return MetricsReport(**mean), MetricsReport(**std)
