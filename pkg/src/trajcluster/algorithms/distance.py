"""Trajectory distances: Euclidean and dynamic time warping."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from trajcluster.errors import CapacityError, ShapeError

MAX_MATRIX_SIZE = 5000


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"series lengths differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((b - a) ** 2)))


def dtw_distance(a, b, window: Optional[int] = None) -> float:
    """Dynamic time warping cost between two series.

    Local cost ``|a_i - b_j|``, unit-weight steps (i-1, j), (i, j-1) and
    (i-1, j-1), no normalization. ``window`` optionally restricts the path
    to ``|i - j| <= window``.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ShapeError("dtw needs non-empty series")
    if window is not None:
        window = max(int(window), abs(n - m))
    cost = np.abs(a[:, None] - b[None, :])
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        lo, hi = 1, m
        if window is not None:
            lo, hi = max(1, i - window), min(m, i + window)
        prev = D[i - 1]
        row = D[i]
        for j in range(lo, hi + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = cost[i - 1, j - 1] + best
    return float(D[n, m])


def _dtw_many(A: np.ndarray, B: np.ndarray, window: Optional[int] = None) -> np.ndarray:
    """DTW between corresponding rows of two equal-width matrices."""
    p, n = A.shape
    m = B.shape[1]
    D = np.full((p, n + 1, m + 1), np.inf)
    D[:, 0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if window is not None and abs(i - j) > window:
                continue
            best = np.minimum(np.minimum(D[:, i - 1, j - 1], D[:, i - 1, j]), D[:, i, j - 1])
            D[:, i, j] = np.abs(A[:, i - 1] - B[:, j - 1]) + best
    return D[:, n, m]


def distance_matrix(
    series: Sequence,
    metric: str = "euclidean",
    window: Optional[int] = None,
    max_size: int = MAX_MATRIX_SIZE,
) -> np.ndarray:
    """Symmetric N x N distance matrix with a zero diagonal.

    ``series`` is either an N x J matrix or a list of 1-d series (DTW only
    for unequal lengths).
    """
    n = len(series)
    if n > max_size:
        raise CapacityError(
            f"{n} trajectories exceed the pairwise-distance cap of {max_size}"
        )
    rows = [np.asarray(s, dtype=float).reshape(-1) for s in series]
    D = np.zeros((n, n))
    if n < 2:
        return D
    iu, ju = np.triu_indices(n, k=1)
    equal = len({r.size for r in rows}) == 1
    if metric == "euclidean":
        if not equal:
            raise ShapeError("euclidean distance needs equal-length series")
        X = np.vstack(rows)
        # explicit differences rather than the Gram identity: no cancellation
        d = np.sqrt(((X[iu] - X[ju]) ** 2).sum(axis=1))
    elif metric == "dtw":
        if equal:
            X = np.vstack(rows)
            d = np.empty(iu.size)
            chunk = 20000
            for s in range(0, iu.size, chunk):
                d[s : s + chunk] = _dtw_many(X[iu[s : s + chunk]], X[ju[s : s + chunk]], window)
        else:
            d = np.array([dtw_distance(rows[i], rows[j], window) for i, j in zip(iu, ju)])
    else:
        raise ValueError(f"unknown distance {metric!r}")
    D[iu, ju] = d
    D[ju, iu] = d
    return D
