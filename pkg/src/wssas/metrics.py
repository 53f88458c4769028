"""Internal clustering-validity indices over Euclidean space."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


class MetricError(ValueError):
    pass


def _prepare(points, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    lab = np.asarray(labels)
    if x.ndim != 2 or lab.shape != (x.shape[0],):
        raise MetricError("points and labels must be aligned")
    if not np.all(np.isfinite(x)):
        raise MetricError("points contain NaN or Inf")
    uniq, codes = np.unique(lab, return_inverse=True)
    if uniq.size < 2:
        raise MetricError("at least 2 clusters are required")
    return x, codes, np.bincount(codes)


def _centroids(x: np.ndarray, codes: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, codes, x)
    return sums / np.bincount(codes, minlength=k)[:, None]


def _pairwise(a: np.ndarray, b: np.ndarray | None = None, block: int = 64) -> np.ndarray:
    """Exact Euclidean distances by explicit differences, computed in row blocks."""
    b = a if b is None else b
    out = np.empty((a.shape[0], b.shape[0]))
    for start in range(0, a.shape[0], block):
        diff = a[start : start + block, None, :] - b[None, :, :]
        out[start : start + block] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def silhouette(points: Sequence, labels: Sequence) -> float:
    """Mean silhouette; members of singleton clusters score 0.

    Distances are taken between distinct vectors only and weighted by how
    many members of each cluster sit on each vector, which keeps memory at
    O(u^2) for u distinct vectors.
    """
    x, codes, sizes = _prepare(points, labels)
    k = sizes.size
    uniq, row_of = np.unique(x, axis=0, return_inverse=True)
    row_of = row_of.reshape(-1)
    mult = np.zeros((uniq.shape[0], k))
    np.add.at(mult, (row_of, codes), 1.0)
    # sum of distances from each distinct vector to every member of each cluster
    per_cluster = _pairwise(uniq) @ mult
    sums = per_cluster[row_of]
    rows = np.arange(x.shape[0])
    own = sizes[codes]
    a = np.divide(sums[rows, codes], own - 1, out=np.zeros(x.shape[0]), where=own > 1)
    means = sums / sizes[None, :]
    means[rows, codes] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(x.shape[0]), where=denom > 0)
    s[own == 1] = 0.0
    return float(s.mean())


def davies_bouldin(points: Sequence, labels: Sequence) -> float:
    x, codes, sizes = _prepare(points, labels)
    k = sizes.size
    cent = _centroids(x, codes, k)
    spread = np.zeros(k)
    np.add.at(spread, codes, np.linalg.norm(x - cent[codes], axis=1))
    spread /= sizes
    gap = _pairwise(cent)
    off = ~np.eye(k, dtype=bool)
    if np.any(gap[off] == 0):
        raise MetricError("degenerate centroids: two clusters share a centroid")
    ratio = np.where(off, (spread[:, None] + spread[None, :]) / np.where(off, gap, 1.0), -np.inf)
    # sorted so that relabeling clusters cannot change the reduction order
    return float(np.sort(ratio.max(axis=1)).mean())


def calinski_harabasz(points: Sequence, labels: Sequence) -> float:
    x, codes, sizes = _prepare(points, labels)
    n, k = x.shape[0], sizes.size
    if n <= k:
        raise MetricError("Calinski-Harabasz needs more points than clusters")
    cent = _centroids(x, codes, k)
    overall = x.mean(axis=0)
    between = float(np.sum(np.sort(sizes * np.sum((cent - overall) ** 2, axis=1))))
    within = float(np.sum((x - cent[codes]) ** 2))
    if within == 0.0:
        raise MetricError("zero within-dispersion: index is unbounded")
    return (between / (k - 1)) / (within / (n - k))


def metric_report(points: Sequence, labels: Sequence) -> dict[str, float | None]:
    """All three indices; an index that is undefined for the input is None."""
    out: dict[str, float | None] = {}
    for name, fn in (
        ("silhouette", silhouette),
        ("davies_bouldin", davies_bouldin),
        ("calinski_harabasz", calinski_harabasz),
    ):
        try:
            out[name] = fn(points, labels)
        except MetricError:
            out[name] = None
    return out
