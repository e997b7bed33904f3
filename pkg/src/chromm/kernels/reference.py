"""Pure numpy implementations of the matching kernels.

This is the fallback backend; ``chromm.kernels._native`` is a Cython port of
exactly the same algorithms (same update order, same tie-breaking) so the two
backends produce interchangeable results. Keep the two files in sync.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def token_distance_matrix(a, b) -> np.ndarray:
    """Pairwise Euclidean distances between token rows: (P,D),(C,D) -> (P,C)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _logsumexp_rows(m: np.ndarray) -> np.ndarray:
    mx = m.max(axis=1)
    return mx + np.log(np.exp(m - mx[:, None]).sum(axis=1))


def sinkhorn_plan(cost, row_mass, col_mass, eps: float, max_iter: int, tol: float):
    """Entropically regularized transport plan in the log domain.

    Alternates the row and column potential updates and stops once both
    marginals are within ``tol`` or after ``max_iter`` sweeps. Returns
    (plan, iterations, converged).
    """
    cost = np.asarray(cost, dtype=float)
    row_mass = np.asarray(row_mass, dtype=float)
    col_mass = np.asarray(col_mass, dtype=float)
    log_a = np.log(row_mass)
    log_b = np.log(col_mass)
    kernel = -cost / eps
    f = np.zeros(cost.shape[0])
    g = np.zeros(cost.shape[1])
    iterations = 0
    converged = False
    for _ in range(max_iter):
        iterations += 1
        f = log_a - _logsumexp_rows(kernel + g[None, :])
        g = log_b - _logsumexp_rows((kernel + f[:, None]).T)
        plan = np.exp(kernel + f[:, None] + g[None, :])
        err = max(
            float(np.abs(plan.sum(axis=1) - row_mass).max()),
            float(np.abs(plan.sum(axis=0) - col_mass).max()),
        )
        if err < tol:
            converged = True
            break
    plan = np.exp(kernel + f[:, None] + g[None, :])
    return plan, iterations, converged


def solve_assignment(cost):
    """Exact rectangular linear assignment (Jonker-Volgenant style).

    Shortest augmenting paths with potentials; matches min(n, m) pairs and
    minimizes their total cost. Ties are resolved deterministically (lowest
    column index; unassigned columns preferred at equal path cost). Returns
    (rows, cols) as int arrays, rows ascending.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if c.size == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    transposed = c.shape[0] > c.shape[1]
    if transposed:
        c = c.T
    n, m = c.shape
    u = np.zeros(n)
    v = np.zeros(m)
    row_for_col = np.full(m, -1, dtype=int)
    col_for_row = np.full(n, -1, dtype=int)
    for cur_row in range(n):
        shortest = np.full(m, np.inf)
        path = np.full(m, -1, dtype=int)
        on_row_tree = np.zeros(n, dtype=bool)
        on_col_tree = np.zeros(m, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            on_row_tree[i] = True
            lowest = np.inf
            index = -1
            for j in range(m):
                if on_col_tree[j]:
                    continue
                r = min_val + c[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    shortest[j] = r
                    path[j] = i
                if shortest[j] < lowest or (
                    shortest[j] == lowest and row_for_col[j] == -1
                ):
                    lowest = shortest[j]
                    index = j
            min_val = lowest
            if not np.isfinite(min_val):
                raise ValueError("assignment problem is infeasible")
            j = index
            if row_for_col[j] == -1:
                sink = j
            else:
                i = row_for_col[j]
            on_col_tree[j] = True
        u[cur_row] += min_val
        for i2 in range(n):
            if on_row_tree[i2] and i2 != cur_row:
                u[i2] += min_val - shortest[col_for_row[i2]]
        for j2 in range(m):
            if on_col_tree[j2]:
                v[j2] -= min_val - shortest[j2]
        j = sink
        while True:
            i = path[j]
            row_for_col[j] = i
            col_for_row[i], j = j, col_for_row[i]
            if i == cur_row:
                break
    rows = np.arange(n)
    cols = col_for_row
    if transposed:
        order = np.argsort(cols, kind="stable")
        return cols[order], rows[order]
    return rows, cols


def joint_pair_cost(world_a, canon_a, world_b, canon_b,
                    w_position: float, w_pose: float) -> float:
    """Matching cost between two tracklets over stacked overlapping frames.

    All four arrays are (T, J, 3); the result is the mean over frames and
    joints of w_position * |dw| + w_pose * |dc|.
    """
    dw = np.linalg.norm(np.asarray(world_a, dtype=float) - np.asarray(world_b, dtype=float), axis=2)
    dc = np.linalg.norm(np.asarray(canon_a, dtype=float) - np.asarray(canon_b, dtype=float), axis=2)
    return float(w_position * dw.mean() + w_pose * dc.mean())


def mean_displacement(joints_a, joints_b) -> float:
    """Mean per-joint Euclidean displacement between two (J, 3) joint sets."""
    diff = np.asarray(joints_a, dtype=float) - np.asarray(joints_b, dtype=float)
    return float(np.linalg.norm(diff, axis=1).mean())
