# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython port of the matching kernels.

Mirrors chromm.kernels.reference operation for operation: same update order,
same tie-breaking, same convergence checks. Keep the two files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt, INFINITY

cnp.import_array()

BACKEND_NAME = "compiled"


def token_distance_matrix(a, b):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t p = av.shape[0], c = bv.shape[0], d = av.shape[1]
    out = np.empty((p, c), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(p):
        for j in range(c):
            acc = 0.0
            for k in range(d):
                diff = av[i, k] - bv[j, k]
                acc += diff * diff
            ov[i, j] = sqrt(acc)
    return out


cdef double _logsumexp_row(double[:, ::1] m, double[::1] add, Py_ssize_t row, Py_ssize_t n) noexcept:
    cdef double mx = -INFINITY
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(n):
        if m[row, j] + add[j] > mx:
            mx = m[row, j] + add[j]
    for j in range(n):
        acc += exp(m[row, j] + add[j] - mx)
    return mx + log(acc)


cdef double _logsumexp_col(double[:, ::1] m, double[::1] add, Py_ssize_t col, Py_ssize_t n) noexcept:
    cdef double mx = -INFINITY
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        if m[i, col] + add[i] > mx:
            mx = m[i, col] + add[i]
    for i in range(n):
        acc += exp(m[i, col] + add[i] - mx)
    return mx + log(acc)


def sinkhorn_plan(cost, row_mass, col_mass, double eps, int max_iter, double tol):
    cdef double[:, ::1] cv = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[::1] am = np.ascontiguousarray(row_mass, dtype=np.float64)
    cdef double[::1] bm = np.ascontiguousarray(col_mass, dtype=np.float64)
    cdef Py_ssize_t r = cv.shape[0], co = cv.shape[1]
    kernel_arr = np.empty((r, co), dtype=np.float64)
    cdef double[:, ::1] kern = kernel_arr
    cdef double[::1] f = np.zeros(r)
    cdef double[::1] g = np.zeros(co)
    cdef double[::1] log_a = np.empty(r)
    cdef double[::1] log_b = np.empty(co)
    plan_arr = np.empty((r, co), dtype=np.float64)
    cdef double[:, ::1] plan = plan_arr
    cdef Py_ssize_t i, j, it
    cdef double err, s
    cdef bint converged = False
    for i in range(r):
        log_a[i] = log(am[i])
    for j in range(co):
        log_b[j] = log(bm[j])
    for i in range(r):
        for j in range(co):
            kern[i, j] = -cv[i, j] / eps
    cdef int n_done = 0
    for it in range(max_iter):
        n_done += 1
        for i in range(r):
            f[i] = log_a[i] - _logsumexp_row(kern, g, i, co)
        for j in range(co):
            g[j] = log_b[j] - _logsumexp_col(kern, f, j, r)
        err = 0.0
        for i in range(r):
            s = 0.0
            for j in range(co):
                plan[i, j] = exp(kern[i, j] + f[i] + g[j])
                s += plan[i, j]
            if fabs(s - am[i]) > err:
                err = fabs(s - am[i])
        for j in range(co):
            s = 0.0
            for i in range(r):
                s += plan[i, j]
            if fabs(s - bm[j]) > err:
                err = fabs(s - bm[j])
        if err < tol:
            converged = True
            break
    for i in range(r):
        for j in range(co):
            plan[i, j] = exp(kern[i, j] + f[i] + g[j])
    return plan_arr, n_done, converged


def solve_assignment(cost):
    c_in = np.asarray(cost, dtype=np.float64)
    if c_in.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if c_in.size == 0:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    cdef bint transposed = c_in.shape[0] > c_in.shape[1]
    if transposed:
        c_in = np.ascontiguousarray(c_in.T)
    else:
        c_in = np.ascontiguousarray(c_in)
    cdef double[:, ::1] c = c_in
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1]
    cdef double[::1] u = np.zeros(n)
    cdef double[::1] v = np.zeros(m)
    row_for_col_arr = np.full(m, -1, dtype=np.intp)
    col_for_row_arr = np.full(n, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] row_for_col = row_for_col_arr
    cdef Py_ssize_t[::1] col_for_row = col_for_row_arr
    cdef double[::1] shortest = np.empty(m)
    cdef Py_ssize_t[::1] path = np.empty(m, dtype=np.intp)
    cdef cnp.uint8_t[::1] on_row_tree = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] on_col_tree = np.zeros(m, dtype=np.uint8)
    cdef Py_ssize_t cur_row, i, j, sink, index, i2, j2, tmp
    cdef double min_val, lowest, r
    for cur_row in range(n):
        for j in range(m):
            shortest[j] = INFINITY
            path[j] = -1
            on_col_tree[j] = 0
        for i in range(n):
            on_row_tree[i] = 0
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            on_row_tree[i] = 1
            lowest = INFINITY
            index = -1
            for j in range(m):
                if on_col_tree[j]:
                    continue
                r = min_val + c[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    shortest[j] = r
                    path[j] = i
                if shortest[j] < lowest or (shortest[j] == lowest and row_for_col[j] == -1):
                    lowest = shortest[j]
                    index = j
            min_val = lowest
            if min_val == INFINITY:
                raise ValueError("assignment problem is infeasible")
            j = index
            if row_for_col[j] == -1:
                sink = j
            else:
                i = row_for_col[j]
            on_col_tree[j] = 1
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
            tmp = col_for_row[i]
            col_for_row[i] = j
            j = tmp
            if i == cur_row:
                break
    rows = np.arange(n, dtype=np.intp)
    if transposed:
        order = np.argsort(col_for_row_arr, kind="stable")
        return col_for_row_arr[order], rows[order]
    return rows, col_for_row_arr


def joint_pair_cost(world_a, canon_a, world_b, canon_b,
                    double w_position, double w_pose):
    cdef double[:, :, ::1] wa = np.ascontiguousarray(world_a, dtype=np.float64)
    cdef double[:, :, ::1] ca = np.ascontiguousarray(canon_a, dtype=np.float64)
    cdef double[:, :, ::1] wb = np.ascontiguousarray(world_b, dtype=np.float64)
    cdef double[:, :, ::1] cb = np.ascontiguousarray(canon_b, dtype=np.float64)
    cdef Py_ssize_t t = wa.shape[0], jn = wa.shape[1]
    cdef Py_ssize_t ti, ji, k
    cdef double acc_w = 0.0, acc_c = 0.0, dw, dc, d
    for ti in range(t):
        for ji in range(jn):
            dw = 0.0
            dc = 0.0
            for k in range(3):
                d = wa[ti, ji, k] - wb[ti, ji, k]
                dw += d * d
                d = ca[ti, ji, k] - cb[ti, ji, k]
                dc += d * d
            acc_w += sqrt(dw)
            acc_c += sqrt(dc)
    return w_position * (acc_w / (t * jn)) + w_pose * (acc_c / (t * jn))


def mean_displacement(joints_a, joints_b):
    cdef double[:, ::1] a = np.ascontiguousarray(joints_a, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(joints_b, dtype=np.float64)
    cdef Py_ssize_t jn = a.shape[0]
    cdef Py_ssize_t ji, k
    cdef double acc = 0.0, d, dist
    for ji in range(jn):
        dist = 0.0
        for k in range(3):
            d = a[ji, k] - b[ji, k]
            dist += d * d
        acc += sqrt(dist)
    return acc / jn
