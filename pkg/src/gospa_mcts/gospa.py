"""GOSPA metric (p = 2, alpha = 2) with full decomposition and optimal assignment."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

_FORBIDDEN = np.inf


@dataclass(frozen=True)
class GospaParams:
    c: float
    p: float = 2.0
    alpha: float = 2.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"GOSPA cutoff c must be positive and finite, got {self.c}")
        if self.p != 2 or self.alpha != 2:
            raise ValueError("only p = 2 and alpha = 2 are supported")


@dataclass(frozen=True)
class GospaBreakdown:
    sq_total: float
    loc_sq: float
    missed_count: int
    false_count: int
    assignment: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(np.sqrt(self.sq_total))

    def missed_sq(self, c: float) -> float:
        return 0.5 * c * c * self.missed_count

    def false_sq(self, c: float) -> float:
        return 0.5 * c * c * self.false_count


def as_target_set(points) -> np.ndarray:
    """Coerce a collection of 2-D positions to an ``(n, 2)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"target set must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("target set contains non-finite coordinates")
    return arr


def _solve(cost: np.ndarray, miss_row: np.ndarray, miss_col: np.ndarray):
    """Optimal partial assignment via an augmented square problem.

    Row ``i`` may stay unassigned at cost ``miss_row[i]``, column ``j`` at
    ``miss_col[j]``. Returns ``(value, pairs)``.
    """
    n, m = cost.shape
    big = np.full((n + m, n + m), _FORBIDDEN)
    big[:n, :m] = cost
    big[np.arange(n), m + np.arange(n)] = miss_row
    big[n + np.arange(m), np.arange(m)] = miss_col
    big[n:, m:] = 0.0
    rows, cols = linear_sum_assignment(big)
    return float(big[rows, cols].sum()), [
        (int(i), int(j)) for i, j in zip(rows, cols) if i < n and j < m
    ]


def _forced(cost, miss_r, miss_c, fixed):
    """Solve with rows in ``fixed`` pinned to a column (or -1 = unassigned)."""
    c = cost.copy()
    mr = miss_r.copy()
    for row, col in fixed.items():
        c[row, :] = _FORBIDDEN
        if col >= 0:
            c[:, col] = _FORBIDDEN
            c[row, col] = cost[row, col]
            mr[row] = _FORBIDDEN
    return _solve(c, mr, miss_c)


def solve_assignment(cost_matrix, unassigned_cost: float) -> List[Tuple[int, int]]:
    """Globally optimal one-to-one partial assignment.

    Every row or column left unmatched costs ``unassigned_cost``. Among optimal
    assignments the one with fewest pairs wins, then the lexicographically
    smallest sorted pair list.
    """
    cost = np.asarray(cost_matrix, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    cut = 2.0 * float(unassigned_cost)
    miss_r = np.full(n, float(unassigned_cost))
    miss_c = np.full(m, float(unassigned_cost))
    best, pairs = _solve(cost, miss_r, miss_c)
    tol = 1e-12 * max(1.0, abs(best))
    # A pair costing as much as two misses is a tie; unassigned wins.
    n_pairs = sum(cost[i, j] < cut for i, j in pairs)

    fixed: dict[int, int] = {}
    for i in range(n):
        fixed[i] = -1
        for j in range(m):
            if j in fixed.values() or cost[i, j] >= cut:
                continue
            value, cand = _forced(cost, miss_r, miss_c, {**fixed, i: j})
            if value <= best + tol and sum(cost[a, b] < cut for a, b in cand) <= n_pairs:
                fixed[i] = j
                break
    return [(i, j) for i, j in fixed.items() if j >= 0]


def gospa(truth, estimate, params: GospaParams | float) -> GospaBreakdown:
    """Squared GOSPA between two sets of 2-D positions, with decomposition.

    ``params`` may be a :class:`GospaParams` or the cutoff ``c`` directly.
    """
    if not isinstance(params, GospaParams):
        params = GospaParams(float(params))
    X = as_target_set(truth)
    Y = as_target_set(estimate)
    c2 = params.c ** 2
    nx, ny = len(X), len(Y)
    if nx == 0 or ny == 0:
        return GospaBreakdown(0.5 * c2 * (nx + ny), 0.0, nx, ny, [])
    d2 = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
    pairs = solve_assignment(np.minimum(d2, c2), 0.5 * c2)
    loc = float(sum(d2[i, j] for i, j in pairs))
    missed = nx - len(pairs)
    false = ny - len(pairs)
    return GospaBreakdown(loc + 0.5 * c2 * (missed + false), loc, missed, false, pairs)


def rms_gospa(sq_totals: Sequence[float]) -> float:
    """Root mean square of squared GOSPA errors."""
    arr = np.asarray(sq_totals, dtype=float)
    if arr.size == 0:
        raise ValueError("rms_gospa needs at least one value")
    if np.any(arr < 0):
        raise ValueError("squared GOSPA values must be non-negative")
    return float(np.sqrt(arr.mean()))
