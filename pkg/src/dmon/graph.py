"""Sparse undirected graphs, normalization, and the file formats we read.

Graphs are stored as symmetric CSR matrices (scipy) with unit weights,
sorted column indices, no duplicates and no self-loops.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp


class EdgeListError(ValueError):
    """Raised for malformed or out-of-range edge-list input."""


@dataclass(frozen=True)
class SparseGraph:
    """Immutable simple undirected graph.

    Attributes
    ----------
    adjacency : scipy.sparse.csr_matrix
        Symmetric 0/1 adjacency, float64, canonical CSR.
    degrees : np.ndarray
        Row sums of ``adjacency``.
    n_self_loops_dropped : int
        Self-loops removed during construction (bookkeeping only).
    """

    adjacency: sp.csr_matrix
    degrees: np.ndarray = field(repr=False)
    n_self_loops_dropped: int = 0

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m(self) -> int:
        return int(self.adjacency.nnz // 2)

    @property
    def row_offsets(self) -> np.ndarray:
        return self.adjacency.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.adjacency.indices

    @classmethod
    def from_edges(cls, src, dst, n: int | None = None) -> "SparseGraph":
        """Build a graph from endpoint arrays.

        Edges are symmetrized, duplicates collapse, self-loops are dropped.
        If ``n`` is None it is inferred as ``max(id) + 1``.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise ValueError("src and dst must have equal length")
        if src.size and min(src.min(), dst.min()) < 0:
            raise EdgeListError("negative node id")
        if n is None:
            n = int(max(src.max(), dst.max()) + 1) if src.size else 0
        elif src.size and max(src.max(), dst.max()) >= n:
            raise EdgeListError(
                f"node id {int(max(src.max(), dst.max()))} out of bounds for n={n}")

        loops = src == dst
        n_loops = int(loops.sum())
        src, dst = src[~loops], dst[~loops]
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        # coo->csr sums duplicates; clamp back to unit weights
        adj.data[:] = 1.0
        adj.sort_indices()
        adj.eliminate_zeros()
        degrees = np.asarray(adj.sum(axis=1)).ravel()
        return cls(adjacency=adj, degrees=degrees, n_self_loops_dropped=n_loops)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "SparseGraph":
        a = np.asarray(a)
        src, dst = np.nonzero(np.triu(a))
        return cls.from_edges(src, dst, n=a.shape[0])

    def edges(self) -> np.ndarray:
        """Return the ``m x 2`` array of edges with ``u < v``."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]])

    def to_dense(self) -> np.ndarray:
        return self.adjacency.toarray()


@dataclass(frozen=True)
class NormalizedAdjacency:
    """``D^{-1/2} A D^{-1/2}`` on the source graph's sparsity pattern."""

    matrix: sp.csr_matrix

    @property
    def shape(self):
        return self.matrix.shape


def inv_sqrt_degrees(degrees: np.ndarray) -> np.ndarray:
    out = np.zeros_like(degrees, dtype=np.float64)
    nz = degrees > 0
    out[nz] = 1.0 / np.sqrt(degrees[nz])
    return out


def normalized_adjacency(g: SparseGraph) -> NormalizedAdjacency:
    """Symmetrically normalize the adjacency without adding self-loops.

    Isolated nodes get ``d^{-1/2} = 0`` so their rows and columns are zero.
    """
    s = inv_sqrt_degrees(g.degrees)
    a = g.adjacency
    rows = np.repeat(np.arange(g.n), np.diff(a.indptr))
    values = s[rows] * s[a.indices]
    mat = sp.csr_matrix((values, a.indices.copy(), a.indptr.copy()), shape=a.shape)
    return NormalizedAdjacency(mat)


def spmm(adj: Union[NormalizedAdjacency, SparseGraph, sp.csr_matrix], x: np.ndarray) -> np.ndarray:
    """Sparse times dense product ``adj @ x`` (x may be 1-D or 2-D)."""
    if isinstance(adj, NormalizedAdjacency):
        mat = adj.matrix
    elif isinstance(adj, SparseGraph):
        mat = adj.adjacency
    else:
        mat = adj
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != mat.shape[1]:
        raise ValueError(f"shape mismatch: {mat.shape} @ {x.shape}")
    return np.asarray(mat @ x)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def parse_edge_list(lines, n_hint: int | None = None) -> SparseGraph:
    src, dst = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"line {lineno}: non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise EdgeListError(f"line {lineno}: negative node id")
        if n_hint is not None and max(u, v) >= n_hint:
            raise EdgeListError(f"line {lineno}: node id {max(u, v)} >= n={n_hint}")
        src.append(u)
        dst.append(v)
    g = SparseGraph.from_edges(np.array(src, dtype=np.int64),
                               np.array(dst, dtype=np.int64), n=n_hint)
    if g.n_self_loops_dropped:
        warnings.warn(f"dropped {g.n_self_loops_dropped} self-loop(s)", stacklevel=2)
    return g


def load_edge_list(path, n_hint: int | None = None) -> SparseGraph:
    """Read a whitespace-separated, 0-indexed ``u v`` edge list."""
    with open(path) as fh:
        return parse_edge_list(fh, n_hint=n_hint)


def save_edge_list(g: SparseGraph, path) -> None:
    np.savetxt(path, g.edges(), fmt="%d", delimiter="\t")


def load_features(path, header: bool = False) -> np.ndarray:
    """Dense CSV feature matrix, one node per row."""
    x = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, dtype=np.float64, ndmin=2)
    return x


def save_features(x: np.ndarray, path) -> None:
    np.savetxt(path, x, delimiter=",", fmt="%.17g")


def load_labels(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.int64, ndmin=1)


def save_labels(labels: np.ndarray, path) -> None:
    Path(path).write_text("".join(f"{int(c)}\n" for c in labels))
