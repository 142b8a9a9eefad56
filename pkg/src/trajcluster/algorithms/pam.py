"""Partitioning around medoids (BUILD + SWAP)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trajcluster.errors import InfeasibleError


@dataclass
class PamResult:
    medoids: np.ndarray
    labels: np.ndarray
    cost: float
    n_swaps: int


def total_cost(D: np.ndarray, medoids) -> float:
    return float(D[:, list(medoids)].min(axis=1).sum())


def pam(D, k: int, max_swaps: int = 1000, tol: float = 1e-12) -> PamResult:
    """k-medoids on a precomputed distance matrix.

    BUILD picks medoids greedily (first the point with the smallest total
    distance, then whichever point reduces the cost most). SWAP then
    performs the best improving medoid/non-medoid exchange until none
    improves the cost by more than ``tol`` (relative). Deterministic; ties
    go to the lowest index.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if k < 1 or k > n:
        raise InfeasibleError(f"cannot pick {k} medoids from {n} points")
    medoids = [int(np.argmin(D.sum(axis=0)))]
    nearest = D[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        c = int(np.argmax(gain))
        medoids.append(c)
        nearest = np.minimum(nearest, D[:, c])

    cost = total_cost(D, medoids)
    swaps = 0
    while swaps < max_swaps and k < n:
        Dm = D[:, medoids]
        order = np.argsort(Dm, axis=1, kind="stable")
        first = Dm[np.arange(n), order[:, 0]]
        second = Dm[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        best_cost, best_swap = cost, None
        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        for slot in range(k):
            # distance to the closest remaining medoid once ``slot`` is removed
            without = np.where(order[:, 0] == slot, second, first)
            cand = np.minimum(D, without[:, None]).sum(axis=0)
            cand[is_medoid] = np.inf
            h = int(np.argmin(cand))
            if cand[h] < best_cost - tol * max(abs(cost), 1.0):
                best_cost, best_swap = float(cand[h]), (slot, h)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        cost = total_cost(D, medoids)
        swaps += 1
    medoids = np.array(medoids)
    labels = D[:, medoids].argmin(axis=1)
    return PamResult(medoids, labels, cost, swaps)
