"""Detection-target association: optimal (Hungarian) and greedy matching."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractViolation

# Rectangular matrices are squared up with a pad cost far above any real entry.
_PAD_FACTOR = 1e3
# Lexicographic tie-break refinement is skipped above this size; the solver
# itself is still deterministic.
_REFINE_LIMIT = 64


def _solve_total(costs: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(costs)
    return float(costs[rows, cols].sum())


def hungarian(costs) -> dict[int, int]:
    """Minimum-cost one-to-one assignment as a partial row -> col map.

    Rectangular matrices are allowed; surplus rows or columns stay unassigned.
    Among equal-cost optima the lexicographically smallest assignment is
    returned (lowest row index first, then lowest column index).
    """
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2 or c.size == 0:
        raise ContractViolation(f"cost matrix must be 2-D and non-empty, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ContractViolation("cost matrix contains non-finite entries")

    n, m = c.shape
    k = max(n, m)
    pad = _PAD_FACTOR * max(1.0, float(np.abs(c).max()))
    sq = np.full((k, k), pad)
    sq[:n, :m] = c

    rows, cols = linear_sum_assignment(sq)
    if k > _REFINE_LIMIT:
        assign = dict(zip(rows.tolist(), cols.tolist()))
        return {r: cl for r, cl in sorted(assign.items()) if r < n and cl < m}

    best = float(sq[rows, cols].sum())
    tol = 1e-9 * max(1.0, abs(best))

    # Fix rows in order onto the smallest column that still reaches the
    # optimal total; this realises the deterministic tie-break exactly.
    free_cols = list(range(k))
    assign: dict[int, int] = {}
    fixed = 0.0
    for r in range(k):
        rest_rows = list(range(r + 1, k))
        for cl in free_cols:
            if rest_rows:
                others = [x for x in free_cols if x != cl]
                sub_total = _solve_total(sq[np.ix_(rest_rows, others)])
            else:
                sub_total = 0.0
            if fixed + sq[r, cl] + sub_total <= best + tol:
                assign[r] = cl
                fixed += sq[r, cl]
                free_cols.remove(cl)
                break
    return {r: cl for r, cl in sorted(assign.items()) if r < n and cl < m}


def greedy_associate(costs, threshold: float) -> dict[int, int]:
    """Row-order greedy matching: each row takes its cheapest unclaimed column.

    A row is left unassigned when every remaining column costs more than
    ``threshold``.  Ties go to the lowest column index.
    """
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2 or c.size == 0:
        raise ContractViolation(f"cost matrix must be 2-D and non-empty, got shape {c.shape}")

    taken: set[int] = set()
    assign: dict[int, int] = {}
    for r in range(c.shape[0]):
        best_col, best_cost = -1, np.inf
        for cl in range(c.shape[1]):
            if cl in taken:
                continue
            if c[r, cl] < best_cost:
                best_col, best_cost = cl, c[r, cl]
        if best_col >= 0 and best_cost <= threshold:
            assign[r] = best_col
            taken.add(best_col)
    return assign
