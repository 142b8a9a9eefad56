"""Lloyd's k-means with seeded restarts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from trajcluster.errors import InfeasibleError, MissingDataError


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    within_ss: float
    converged: bool
    n_iter: int
    history: List[float] = field(default_factory=list)


def _sq_dist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _initial_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # prefer distinct rows; fall back to duplicates only when there are too few
    _, first = np.unique(X, axis=0, return_index=True)
    first = np.sort(first)
    if first.size >= k:
        pick = rng.choice(first, size=k, replace=False)
    else:
        rest = np.setdiff1d(np.arange(X.shape[0]), first)
        pick = np.concatenate([first, rng.choice(rest, size=k - first.size, replace=False)])
    return X[pick].astype(float)


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 100) -> KMeansResult:
    """Lloyd iterations from the given centers.

    A cluster that loses all its members is moved onto the point farthest
    from its current center (taken from a cluster with at least two
    members), which never increases the within-cluster sum of squares.
    """
    X = np.asarray(X, dtype=float)
    C = np.array(centers, dtype=float)
    k = C.shape[0]
    labels = _sq_dist(X, C).argmin(axis=1)
    history = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels = _fix_empty(X, C, labels, k)
        for j in range(k):
            C[j] = X[labels == j].mean(axis=0)
        history.append(float(((X - C[labels]) ** 2).sum()))
        new = _sq_dist(X, C).argmin(axis=1)
        new = _fix_empty(X, C, new, k)
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    wss = float(((X - C[labels]) ** 2).sum())
    if not history or history[-1] != wss:
        history.append(wss)
    return KMeansResult(C, labels, wss, converged, n_iter, history)


def _fix_empty(X, C, labels, k):
    counts = np.bincount(labels, minlength=k)
    while np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0])
        d = ((X - C[labels]) ** 2).sum(axis=1)
        d[counts[labels] < 2] = -1.0
        far = int(np.argmax(d))
        labels = labels.copy()
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] += 1
        C[j] = X[far]
    return labels


def kmeans(
    X,
    k: int,
    nstart: int = 20,
    max_iter: int = 100,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> KMeansResult:
    """Best-of-``nstart`` k-means.

    Each start draws ``k`` distinct rows as initial centers from ``rng``
    (or a generator seeded with ``seed``); the run with the smallest
    within-cluster sum of squares wins, ties going to the earlier start.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if np.isnan(X).any():
        raise MissingDataError("k-means input contains missing values")
    if k < 1 or k > n:
        raise InfeasibleError(f"cannot form {k} clusters from {n} rows")
    if rng is None:
        rng = np.random.default_rng(seed)
    if k == 1:
        c = X.mean(axis=0, keepdims=True)
        wss = float(((X - c) ** 2).sum())
        return KMeansResult(c, np.zeros(n, dtype=int), wss, True, 1, [wss])
    best = None
    for _ in range(max(1, int(nstart))):
        res = lloyd(X, _initial_centers(X, k, rng), max_iter)
        if best is None or res.within_ss < best.within_ss:
            best = res
    return best
