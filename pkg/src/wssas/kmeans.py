"""Seeded Lloyd's K-Means with a fixed, platform-independent PRNG.

Initialization draws ``k`` distinct rows from the lexicographically sorted
set of distinct input vectors. The draw uses SplitMix64 (Steele, Lea and
Flood's constants) and a partial Fisher-Yates shuffle taking ``next() % m``
at each step, so a seed fixes the centroids on every platform. All restarts
consume one SplitMix64 stream in restart order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def sample(self, m: int, k: int) -> list[int]:
        """``k`` distinct indices from ``range(m)`` in draw order."""
        if not 0 <= k <= m:
            raise ValueError(f"cannot draw {k} distinct indices from {m}")
        pool = list(range(m))
        for i in range(k):
            j = i + self.next() % (m - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    restart: int
    iterations: int
    inertia_trace: list[float] = field(default_factory=list)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def lloyd(
    x: np.ndarray, init: np.ndarray, tol: float = 1e-6, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    cent = init.astype(float).copy()
    trace: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _sq_dists(x, cent)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(x.shape[0]), labels].sum())
        if trace and inertia > trace[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"inertia increased: {trace[-1]} -> {inertia}")
        trace.append(inertia)
        new = cent.copy()
        for c in range(cent.shape[0]):
            mask = labels == c
            if mask.any():
                new[c] = x[mask].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new - cent, axis=1)))
        cent = new
        if shift < tol:
            break
    d2 = _sq_dists(x, cent)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(x.shape[0]), labels].sum())
    return labels, cent, inertia, iterations, trace


def kmeans(
    x: np.ndarray,
    k: int,
    seed: int,
    restarts: int = 10,
    tol: float = 1e-6,
    max_iter: int = 100,
    rng: SplitMix64 | None = None,
) -> KMeansResult:
    """Best-of-``restarts`` Lloyd run; ties in inertia go to the earlier restart."""
    x = np.asarray(x, dtype=float)
    uniq = np.unique(x, axis=0)
    if k < 1 or k > uniq.shape[0]:
        raise ValueError(f"k={k} needs at least {k} distinct points (have {uniq.shape[0]})")
    rng = rng or SplitMix64(seed)
    best: KMeansResult | None = None
    for r in range(restarts):
        init = uniq[rng.sample(uniq.shape[0], k)]
        labels, cent, inertia, iters, trace = lloyd(x, init, tol, max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, cent, inertia, r, iters, trace)
    return best
