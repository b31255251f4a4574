# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SMO solver and CART tree kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

cdef double TAU = 1e-12
# Exact int64 split comparison holds while 2 * n**5 < 2**63.
MAX_EXACT_ROWS = 4000


def smo_solve(K, y, double C, double tol, long max_iter):
    cdef double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    alpha_arr = np.zeros(n)
    G_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr
    cdef Py_ssize_t t, i, j
    cdef long it = 0
    cdef double gap = INFINITY
    cdef double v, m, M, b, a, obj, best_obj
    cdef double yi, yj, Kij, old_i, old_j, quad, delta, diff, total, ai, aj, d_i, d_j
    cdef bint is_up, is_low

    while True:
        i = -1
        m = -INFINITY
        M = INFINITY
        for t in range(n):
            v = -yv[t] * G[t]
            is_up = (yv[t] > 0 and alpha[t] < C) or (yv[t] < 0 and alpha[t] > 0)
            is_low = (yv[t] < 0 and alpha[t] < C) or (yv[t] > 0 and alpha[t] > 0)
            if is_up and (i < 0 or v > m):
                m = v
                i = t
            if is_low and v < M:
                M = v
        if i < 0 or M == INFINITY:
            gap = 0.0
            break
        gap = m - M
        if gap < tol or it >= max_iter:
            break
        j = -1
        best_obj = INFINITY
        for t in range(n):
            is_low = (yv[t] < 0 and alpha[t] < C) or (yv[t] > 0 and alpha[t] > 0)
            if not is_low:
                continue
            v = -yv[t] * G[t]
            b = m - v
            if not b > 0:
                continue
            a = Kv[i, i] + Kv[t, t] - 2.0 * Kv[i, t]
            if a <= 0:
                a = TAU
            obj = -(b * b) / a
            if j < 0 or obj < best_obj:
                best_obj = obj
                j = t
        if j < 0:
            break
        it += 1

        yi = yv[i]
        yj = yv[j]
        Kij = Kv[i, j]
        old_i = alpha[i]
        old_j = alpha[j]
        if yi != yj:
            quad = Kv[i, i] + Kv[j, j] + 2.0 * (yi * yj * Kij)
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = old_i - old_j
            ai = old_i + delta
            aj = old_j + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            quad = Kv[i, i] + Kv[j, j] - 2.0 * (yi * yj * Kij)
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = old_i + old_j
            ai = old_i - delta
            aj = old_j + delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        d_i = ai - old_i
        d_j = aj - old_j
        for t in range(n):
            G[t] = G[t] + ((yv[t] * yi * Kv[t, i]) * d_i + (yv[t] * yj * Kv[t, j]) * d_j)

    return alpha_arr, _bias(alpha, yv, G, C), it, float(gap)


cdef double _bias(double[::1] alpha, double[::1] y, double[::1] G, double C):
    cdef Py_ssize_t t, n = y.shape[0], n_free = 0
    cdef double yG, free_sum = 0.0, ub = INFINITY, lb = -INFINITY
    for t in range(n):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            n_free += 1
    if n_free > 0:
        # Summed in index order to match the numpy reduction on small inputs.
        free_vals = np.asarray([y[t] * G[t] for t in range(n) if 0 < alpha[t] < C])
        return -float(np.sum(free_vals) / n_free)
    return -(ub + lb) / 2.0


cdef bint _better(long long num, long long den, long long best_num, long long best_den):
    if best_den == 0:
        return True
    return num * best_den > best_num * den


def grow_tree(X, y, indices, Py_ssize_t n_classes, Py_ssize_t max_features, long max_depth,
              Py_ssize_t min_leaf, rng):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef long long[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape[0] > MAX_EXACT_ROWS:
        raise ValueError(f"compiled tree kernel supports at most {MAX_EXACT_ROWS} rows")
    builder = _TreeBuilder(Xv, yv, n_classes, max_features, max_depth, min_leaf, rng)
    builder.build(idx, 0)
    n_nodes = len(builder.feature)
    return (np.array(builder.feature, dtype=np.int64), np.array(builder.threshold, dtype=np.float64),
            np.array(builder.left, dtype=np.int64), np.array(builder.right, dtype=np.int64),
            np.array(builder.counts, dtype=np.int64).reshape(n_nodes, n_classes))


cdef class _TreeBuilder:
    cdef double[:, ::1] X
    cdef long long[::1] y
    cdef Py_ssize_t n_classes, max_features, min_leaf
    cdef long max_depth
    cdef object rng
    cdef public list feature, threshold, left, right, counts

    def __init__(self, double[:, ::1] X, long long[::1] y, Py_ssize_t n_classes,
                 Py_ssize_t max_features, long max_depth, Py_ssize_t min_leaf, rng):
        self.X = X
        self.y = y
        self.n_classes = n_classes
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.rng = rng
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.counts = []

    cpdef Py_ssize_t build(self, cnp.ndarray idx_arr, long depth):
        cdef long long[::1] idx = idx_arr
        cdef Py_ssize_t n = idx.shape[0]
        cdef Py_ssize_t node = len(self.feature)
        cdef Py_ssize_t d = self.X.shape[1]
        cdef Py_ssize_t k, r, p, f, visited = 0, nonzero = 0
        c_arr = np.zeros(self.n_classes, dtype=np.int64)
        cdef long long[::1] c = c_arr
        for r in range(n):
            c[self.y[idx[r]]] += 1
        for k in range(self.n_classes):
            if c[k] > 0:
                nonzero += 1
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(c_arr)
        if nonzero <= 1 or (self.max_depth >= 0 and depth >= self.max_depth) or n < 2 * self.min_leaf:
            return node

        col_arr = np.empty(n, dtype=np.float64)
        cdef double[::1] col = col_arr
        left_arr = np.zeros(self.n_classes, dtype=np.int64)
        cdef long long[::1] lc = left_arr
        cdef long long[::1] order
        cdef double lo, hi, thr, best_thr = 0.0
        cdef long long sl, sr, nl, nr, num, den, best_num = 0, best_den = 0, rk
        cdef long long cur_num, cur_den
        cdef Py_ssize_t best_f = -1, cur_p
        cdef bint found

        for f in self.rng.permutation(d):
            if visited >= self.max_features:
                break
            lo = INFINITY
            hi = -INFINITY
            for r in range(n):
                col[r] = self.X[idx[r], f]
                if col[r] < lo:
                    lo = col[r]
                if col[r] > hi:
                    hi = col[r]
            if hi <= lo:
                continue
            visited += 1
            order = np.argsort(col_arr, kind="stable")
            for k in range(self.n_classes):
                lc[k] = 0
            found = False
            cur_num = 0
            cur_den = 0
            cur_p = -1
            for p in range(n - 1):
                lc[self.y[idx[order[p]]]] += 1
                nl = p + 1
                nr = n - nl
                if nl < self.min_leaf or nr < self.min_leaf:
                    continue
                if not col[order[p + 1]] > col[order[p]]:
                    continue
                sl = 0
                sr = 0
                for k in range(self.n_classes):
                    sl += lc[k] * lc[k]
                    rk = c[k] - lc[k]
                    sr += rk * rk
                num = sl * nr + sr * nl
                den = nl * nr
                if not found or _better(num, den, cur_num, cur_den):
                    found = True
                    cur_num = num
                    cur_den = den
                    cur_p = p
            if not found:
                continue
            if best_f < 0 or _better(cur_num, cur_den, best_num, best_den):
                lo = col[order[cur_p]]
                hi = col[order[cur_p + 1]]
                thr = (lo + hi) / 2.0
                if thr >= hi:
                    thr = lo
                best_num = cur_num
                best_den = cur_den
                best_f = f
                best_thr = thr
        if best_f < 0:
            return node
        go_left = np.asarray(self.X[:, best_f])[idx_arr] <= best_thr
        self.feature[node] = best_f
        self.threshold[node] = best_thr
        self.left[node] = self.build(idx_arr[go_left], depth + 1)
        self.right[node] = self.build(idx_arr[~go_left], depth + 1)
        return node


def tree_apply(X, feature, threshold, left, right):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef long long[::1] fv = np.ascontiguousarray(feature, dtype=np.int64)
    cdef double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef long long[::1] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef long long[::1] rv = np.ascontiguousarray(right, dtype=np.int64)
    cdef Py_ssize_t n = Xv.shape[0], r
    out_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef long long node
    for r in range(n):
        node = 0
        while fv[node] >= 0:
            if Xv[r, fv[node]] <= tv[node]:
                node = lv[node]
            else:
                node = rv[node]
        out[r] = node
    return out_arr
