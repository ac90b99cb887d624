"""Single-signal reference methods.

``kmeans`` sees only node features; ``spectral_modularity`` sees only the
graph (leading eigenvectors of the modularity matrix, k-means on the
embedding, then greedy single-node refinement).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from dmon.graph import SparseGraph, spmm
from dmon.metrics import as_partition, modularity


@dataclass
class KMeansResult:
    centers: np.ndarray
    assignments: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_history: list[float] | None = None


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centers.T
         + np.sum(centers * centers, axis=1)[None, :])
    return np.maximum(d, 0.0)


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1]).ravel()
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[j] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[j:j + 1]).ravel())
    return centers


def kmeans(x: np.ndarray, k: int, seed: int | np.random.Generator = 0,
           max_iters: int = 300) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds.

    Stops at an assignment fixpoint or after ``max_iters`` updates. A cluster
    that empties out is reseeded at the point farthest from its center.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")
    if k < 1:
        raise ValueError("k must be positive")
    rng = np.random.default_rng(seed)
    centers = kmeans_plus_plus(x, k, rng)
    dist = _sq_dists(x, centers)
    labels = np.argmin(dist, axis=1)
    history = [float(dist[np.arange(n), labels].sum())]
    it = 0
    for it in range(1, max_iters + 1):
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
        dist = _sq_dists(x, centers)
        new_labels = np.argmin(dist, axis=1)
        counts = np.bincount(new_labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(dist[np.arange(n), new_labels]))
            centers[j] = x[far]
            new_labels[far] = j
            dist[:, j] = _sq_dists(x, centers[j:j + 1]).ravel()
        history.append(float(dist[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    inertia = float(dist[np.arange(n), labels].sum())
    return KMeansResult(centers, labels.astype(np.int64), inertia, it, history)


# ---------------------------------------------------------------------------
# spectral modularity
# ---------------------------------------------------------------------------

def modularity_matvec(g: SparseGraph, x: np.ndarray) -> np.ndarray:
    """``B x = A x - d (d^T x) / 2m`` without forming ``B``; x may be n or n x r."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.n:
        raise ValueError(f"vector length {x.shape[0]} != n={g.n}")
    two_m = 2.0 * g.m
    dx = g.degrees @ x
    return spmm(g, x) - np.multiply.outer(g.degrees, dx) / two_m


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    converged: bool
    n_iter: int


def top_eigenpairs(g: SparseGraph, k: int, seed: int | np.random.Generator = 0,
                   tol: float = 1e-10, max_iters: int = 5000, oversample: int = 8) -> EigenResult:
    """Largest algebraic eigenpairs of the modularity matrix.

    Orthogonal (block power) iteration on ``B + shift I`` using only
    ``modularity_matvec``, with a Rayleigh-Ritz step per iteration. The shift
    bounds the spectrum of ``B`` from below so the dominant subspace is the
    algebraically largest one.
    """
    if g.m == 0:
        raise ValueError("modularity matrix is undefined for a graph with no edges")
    n = g.n
    k = min(k, n)
    block = min(n, k + oversample)
    two_m = 2.0 * g.m
    shift = g.degrees.max() + g.degrees @ g.degrees / two_m
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, block)))
    scale = max(shift, 1.0)
    values = vectors = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        bq = modularity_matvec(g, q)
        # Rayleigh-Ritz on the current subspace
        h = q.T @ bq
        h = 0.5 * (h + h.T)
        evals, evecs = np.linalg.eigh(h)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        vectors = q @ evecs
        values = evals
        resid = np.linalg.norm(bq @ evecs[:, :k] - vectors[:, :k] * values[:k], axis=0)
        if np.all(resid <= tol * scale):
            converged = True
            break
        q, _ = np.linalg.qr(bq @ evecs + shift * vectors)
    if not converged:
        warnings.warn(f"block power iteration did not converge in {max_iters} iterations; "
                      "returning the last iterate", RuntimeWarning, stacklevel=2)
    return EigenResult(values[:k], vectors[:, :k], converged, it)


def greedy_refine(g: SparseGraph, p, max_passes: int = 50) -> np.ndarray:
    """Greedy single-node moves that strictly increase modularity.

    Each node may move to a cluster holding one of its neighbors; the best
    positive-gain move is taken. Passes repeat until none improves.
    """
    p = as_partition(p, g.n).copy()
    if g.m == 0:
        return p
    m = float(g.m)
    deg = g.degrees
    k = int(p.max()) + 1
    volume = np.bincount(p, weights=deg, minlength=k)
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    for _ in range(max_passes):
        moved = 0
        for i in range(g.n):
            nbrs = indices[indptr[i]:indptr[i + 1]]
            if nbrs.size == 0:
                continue
            a = p[i]
            cands, links = np.unique(p[nbrs], return_counts=True)
            k_ia = links[cands == a].sum()
            mask = cands != a
            if not mask.any():
                continue
            cands, links = cands[mask], links[mask]
            gain = (links - k_ia) / m - deg[i] * (volume[cands] - volume[a] + deg[i]) / (2.0 * m * m)
            best = int(np.argmax(gain))
            if gain[best] > 1e-12:
                b = cands[best]
                volume[a] -= deg[i]
                volume[b] += deg[i]
                p[i] = b
                moved += 1
        if not moved:
            break
    return p


def spectral_modularity(g: SparseGraph, k: int, seed: int = 0, refine: bool = True,
                        max_passes: int = 50, n_init: int = 10, tol: float = 1e-8) -> np.ndarray:
    """Graph-only clustering by spectral modularity maximization.

    Rows of the leading eigenvectors, scaled by ``sqrt(max(lambda, 0))``, are
    clustered with k-means (``n_init`` restarts) and each result is refined
    greedily; the partition with the highest modularity wins.
    """
    if g.m == 0:
        raise ValueError("spectral modularity needs at least one edge")
    if k <= 1:
        return np.zeros(g.n, dtype=np.int64)
    ss = np.random.SeedSequence(seed).spawn(1 + n_init)
    eig = top_eigenpairs(g, k, seed=np.random.default_rng(ss[0]), tol=tol)
    embedding = eig.vectors * np.sqrt(np.maximum(eig.values, 0.0))
    if not np.any(embedding):
        embedding = eig.vectors
    best, best_q = None, -np.inf
    for child in ss[1:]:
        labels = kmeans(embedding, k, seed=np.random.default_rng(child)).assignments
        if refine:
            labels = greedy_refine(g, labels, max_passes=max_passes)
        q = modularity(g, labels)
        if q > best_q:
            best, best_q = labels, q
    return best
