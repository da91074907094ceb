"""Seeded k-means over embedding vectors.

Lloyd's algorithm with k-means++ initialization, run on unit-normalized
vectors so Euclidean clustering follows cosine geometry. Fully deterministic
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingVector
from .errors import TooFewPoints

MAX_ITER = 300
TOL = 1e-6


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray  # shape (n,), cluster index per vector
    centers: np.ndarray  # shape (k, d)
    inertia: float
    n_iter: int

    def members(self, cluster: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.assignments == cluster)]


def _as_matrix(vectors: Sequence[EmbeddingVector] | np.ndarray) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        mat = np.asarray(vectors, dtype=np.float64)
    else:
        mat = np.stack([v.values for v in vectors]).astype(np.float64)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero vectors cannot be unit-normalized")
    return mat / norms


def _kmeans_plus_plus(mat: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = mat.shape[0]
    centers = np.empty((k, mat.shape[1]))
    first = int(rng.integers(n))
    centers[0] = mat[first]
    d2 = np.sum((mat - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass at distance zero (duplicate points): pick any
            # index not yet used, uniformly
            probs = np.full(n, 1.0 / n)
        else:
            probs = d2 / total
        idx = int(rng.choice(n, p=probs))
        centers[c] = mat[idx]
        d2 = np.minimum(d2, np.sum((mat - centers[c]) ** 2, axis=1))
    return centers


def kmeans(
    vectors: Sequence[EmbeddingVector] | np.ndarray,
    k: int,
    seed: int,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> KMeansResult:
    """Cluster vectors into k groups; deterministic given the seed."""
    mat = _as_matrix(vectors)
    n = mat.shape[0]
    if k <= 0:
        raise ValueError("k must be positive")
    if n < k:
        raise TooFewPoints(f"{n} vectors cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(mat, k, rng)
    assignments = np.zeros(n, dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        dists = np.sum((mat[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        assignments = np.argmin(dists, axis=1)
        new_centers = centers.copy()
        for c in range(k):
            mask = assignments == c
            if mask.any():
                new_centers[c] = mat[mask].mean(axis=0)
            else:
                # re-seed an empty cluster with the point farthest from its center
                worst = int(np.argmax(dists[np.arange(n), assignments]))
                new_centers[c] = mat[worst]
        shift = float(np.sum((new_centers - centers) ** 2))
        centers = new_centers
        if shift <= tol:
            break
    dists = np.sum((mat[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    assignments = np.argmin(dists, axis=1)
    inertia = float(np.sum(dists[np.arange(n), assignments]))
    return KMeansResult(assignments=assignments, centers=centers, inertia=inertia, n_iter=n_iter)
