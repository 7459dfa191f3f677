"""Linear assignment with deterministic tie-breaking and cost gating."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

SENTINEL = 1e5
_REL_TOL = 1e-9


def _as_matrix(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=float)
    if c.ndim == 1 and c.size == 0:
        return c.reshape(0, 0)
    if c.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {c.shape}")
    return c


def _solve(cost: np.ndarray) -> tuple[float, list[tuple[int, int]]]:
    if cost.size == 0:
        return 0.0, []
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum()), list(zip(rows.tolist(), cols.tolist()))


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of ``min(M, N)`` pairs.

    Among equal-cost optima the sorted pair list that is lexicographically
    smallest is returned. Rows are fixed one at a time to the lowest column
    that still admits an optimal completion; only columns below the one the
    solver already picked need checking.
    """
    c = _as_matrix(cost)
    if c.size == 0:
        return []
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")

    m, n = c.shape
    opt, _ = _solve(c)
    tol = _REL_TOL * max(1.0, abs(opt))

    fixed: list[tuple[int, int]] = []
    fixed_cost = 0.0
    free_cols = list(range(n))
    for i in range(m):
        rest_rows = list(range(i + 1, m))
        if not free_cols:
            break
        # solver's choice for row i given the rows already fixed
        sub = c[np.ix_(range(i, m), free_cols)]
        _, pairs = _solve(sub)
        chosen = next((free_cols[cj] for ri, cj in pairs if ri == 0), None)
        limit = chosen if chosen is not None else n
        pick = None
        for j in free_cols:
            if j >= limit:
                break
            cols_left = [k for k in free_cols if k != j]
            rest_cost, _ = _solve(c[np.ix_(rest_rows, cols_left)])
            if abs(fixed_cost + c[i, j] + rest_cost - opt) <= tol:
                pick = j
                break
        if pick is None:
            pick = chosen
        if pick is None:
            continue  # row i left unassigned (more rows than columns)
        fixed.append((i, pick))
        fixed_cost += c[i, pick]
        free_cols.remove(pick)
    return fixed


def gated_match(cost, gate: float):
    """Assignment where pairs costing more than ``gate`` are forbidden.

    Returns ``(matches, unmatched_rows, unmatched_cols)``; together they
    partition the rows and the columns.
    """
    if gate < 0:
        raise ValueError(f"gate must be >= 0, got {gate}")
    c = _as_matrix(cost)
    m, n = c.shape
    if m == 0 or n == 0:
        return [], list(range(m)), list(range(n))
    masked = np.where(c > gate, SENTINEL, c)
    matches = [(i, j) for i, j in hungarian(masked) if c[i, j] <= gate]
    used_r = {i for i, _ in matches}
    used_c = {j for _, j in matches}
    return (
        matches,
        [i for i in range(m) if i not in used_r],
        [j for j in range(n) if j not in used_c],
    )
