"""Kuhn-Munkres assignment on dense cost matrices."""
from __future__ import annotations

import numpy as np


def _hungarian_square(cost: np.ndarray) -> np.ndarray:
    """Min-cost perfect matching on an n x n matrix via row-by-row shortest
    augmenting paths with dual potentials, O(n^3). Returns col index per row."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=int)  # owner[j] = row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assignment = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        assignment[owner[j] - 1] = j - 1
    return assignment


def linear_assignment(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment for a rectangular matrix.

    The matrix is zero-padded to square; pairs touching padding are dropped,
    so ``min(rows, cols)`` pairs come back, sorted by row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be 2-D")
    r, c = cost.shape
    if r == 0 or c == 0:
        return []
    n = max(r, c)
    square = np.zeros((n, n))
    square[:r, :c] = cost
    cols = _hungarian_square(square)
    return [(i, int(cols[i])) for i in range(r) if cols[i] < c]


def max_weight_matching(weights) -> tuple[list[tuple[int, int]], float]:
    """Assignment maximising total weight; returns (pairs, total)."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        return [], 0.0
    pairs = linear_assignment(-w)
    return pairs, float(sum(w[i, j] for i, j in pairs))
