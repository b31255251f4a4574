"""Pure-Python/numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation so both backends
produce the same models; the compiled module is preferred when present.
"""
from __future__ import annotations

import numpy as np

TAU = 1e-12


def smo_solve(K, y, C, tol, max_iter):
    """Solve the binary soft-margin SVM dual with second-order working-set selection.

    ``K`` is the (n, n) kernel matrix, ``y`` holds +/-1 labels. Returns
    ``(alpha, bias, iterations, gap)`` where ``gap`` is the final maximal
    KKT violation; the solve converged iff ``gap < tol``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    it = 0
    gap = np.inf
    while True:
        v = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            gap = 0.0
            break
        v_up = np.where(up, v, -np.inf)
        i = int(np.argmax(v_up))
        m = v_up[i]
        M = np.min(np.where(low, v, np.inf))
        gap = m - M
        if gap < tol or it >= max_iter:
            break
        b = m - v
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a <= 0, TAU, a)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        if not cand[j]:
            break
        it += 1

        yi, yj = y[i], y[j]
        Kij = K[i, j]
        old_i, old_j = alpha[i], alpha[j]
        if yi != yj:
            quad = diag[i] + diag[j] + 2.0 * (yi * yj * Kij)
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
            quad = diag[i] + diag[j] - 2.0 * (yi * yj * Kij)
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
        G += (y * yi * K[:, i]) * d_i + (y * yj * K[:, j]) * d_j

    return alpha, _bias(alpha, y, G, C), it, float(gap)


def _bias(alpha, y, G, C):
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~(upper | lower)
    if free.any():
        rho = float(np.sum(yG[free]) / np.count_nonzero(free))
    else:
        ub_mask = (upper & (y < 0)) | (lower & (y > 0))
        lb_mask = (upper & (y > 0)) | (lower & (y < 0))
        ub = float(np.min(yG[ub_mask])) if ub_mask.any() else np.inf
        lb = float(np.max(yG[lb_mask])) if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0
    return -rho


def _better(num, den, best_num, best_den):
    # Exact comparison of num/den > best_num/best_den with Python ints.
    if best_den == 0:
        return True
    return num * best_den > best_num * den


def _best_split_feature(xs, ys, n_classes, min_leaf):
    """Best threshold on one sorted feature column.

    Returns (position, num, den) maximising sum_k cL_k^2/nL + sum_k cR_k^2/nR,
    or None. ``position`` p splits sorted rows [0..p] | [p+1..].
    """
    n = len(xs)
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), ys] = 1
    left = np.cumsum(onehot, axis=0)[:-1]
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, n, dtype=np.int64)
    nr = n - nl
    sl = np.sum(left * left, axis=1)
    sr = np.sum(right * right, axis=1)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    num = sl * nr + sr * nl
    den = nl * nr
    score = np.where(valid, num / den, -np.inf)
    top = score.max()
    near = np.flatnonzero(valid & (score >= top - 1e-9 * abs(top)))
    best = None
    for p in near:
        pn, pd = int(num[p]), int(den[p])
        if best is None or _better(pn, pd, best[1], best[2]):
            best = (int(p), pn, pd)
    return best


def grow_tree(X, y, indices, n_classes, max_features, max_depth, min_leaf, rng):
    """Grow one CART tree (Gini) on ``X[indices]``.

    Returns ``(feature, threshold, left, right, counts)`` node arrays in
    preorder; leaves have ``feature == -1``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    d = X.shape[1]
    feature, threshold, left, right, counts = [], [], [], [], []

    def build(idx, depth):
        node = len(feature)
        c = np.bincount(y[idx], minlength=n_classes).astype(np.int64)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(c)
        n = len(idx)
        if np.count_nonzero(c) <= 1 or (max_depth >= 0 and depth >= max_depth) or n < 2 * min_leaf:
            return node
        best = None  # (num, den, feature, threshold, order, pos)
        visited = 0
        for f in rng.permutation(d):
            if visited >= max_features:
                break
            col = X[idx, f]
            if col.max() <= col.min():
                continue
            visited += 1
            order = np.argsort(col, kind="stable")
            xs = col[order]
            found = _best_split_feature(xs, y[idx][order], n_classes, min_leaf)
            if found is None:
                continue
            p, num, den = found
            if best is None or _better(num, den, best[0], best[1]):
                thr = (xs[p] + xs[p + 1]) / 2.0
                if thr >= xs[p + 1]:
                    thr = xs[p]
                best = (num, den, int(f), float(thr))
        if best is None:
            return node
        f, thr = best[2], best[3]
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.asarray(indices, dtype=np.int64), 0)
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(counts, dtype=np.int64).reshape(len(feature), n_classes))


def tree_apply(X, feature, threshold, left, right):
    """Leaf index reached by each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        cur = node[rows]
        go_left = X[rows, feature[cur]] <= threshold[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
        active = feature[node] >= 0
    return node
