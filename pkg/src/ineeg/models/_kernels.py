"""Numba kernels for the tree, stump and SVM inner loops."""

import numpy as np
from numba import njit

_TIE = 1e-12
_INSERTION_MAX = 48


@njit(cache=True)
def _insertion_argsort(vals, n, order):
    # small nodes dominate tree growth; this avoids argsort's allocation
    for i in range(n):
        order[i] = i
    for i in range(1, n):
        k = order[i]
        v = vals[k]
        j = i - 1
        while j >= 0 and vals[order[j]] > v:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = k


@njit(cache=True)
def _grow_into(XT, y, idx, max_depth, min_leaf, max_features,
               feature, threshold, left, right, value, base):
    """Grow one CART tree over the rows in ``idx`` (duplicates allowed).

    ``XT`` is the transposed design matrix. Nodes are written from ``base``
    on; child links are tree-local. Gini impurity, midpoint thresholds
    between consecutive distinct values. When ``max_features < d`` features
    are visited in random order (``np.random`` must already be seeded) until
    ``max_features`` non-constant ones were scanned. Ties go to the lowest
    feature index, then the lowest threshold. Returns the node count.
    """
    n_total = idx.shape[0]
    d = XT.shape[0]
    cap = 2 * n_total + 1
    feats = np.arange(d)
    vals = np.empty(n_total)
    small_order = np.empty(n_total, np.int64)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_total
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        n = end - start
        pos = 0
        for i in range(start, end):
            pos += y[idx[i]]
        g = base + node
        feature[g] = -1
        left[g] = -1
        right[g] = -1
        threshold[g] = 0.0
        value[g] = pos / n
        if pos == 0 or pos == n or depth >= max_depth or n < 2 * min_leaf:
            continue

        best_imp = np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        for j in range(d):
            if max_features < d:
                r = j + np.random.randint(0, d - j)
                tmp = feats[j]
                feats[j] = feats[r]
                feats[r] = tmp
            f = feats[j]
            col = XT[f]
            lo = np.inf
            hi = -np.inf
            for i in range(n):
                v = col[idx[start + i]]
                vals[i] = v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if not hi > lo:
                continue
            visited += 1
            if n <= _INSERTION_MAX:
                order = small_order
                _insertion_argsort(vals, n, order)
            else:
                order = np.argsort(vals[:n])
            pos_left = 0
            for i in range(1, n):
                k_prev = order[i - 1]
                pos_left += y[idx[start + k_prev]]
                v0 = vals[k_prev]
                v1 = vals[order[i]]
                if not v1 > v0:
                    continue
                nl = i
                nr = n - i
                if nl < min_leaf or nr < min_leaf:
                    continue
                pr = pos - pos_left
                imp = (2.0 * pos_left * (nl - pos_left) / nl + 2.0 * pr * (nr - pr) / nr) / n
                thr = 0.5 * (v0 + v1)
                if not thr < v1:
                    thr = v0
                if imp < best_imp - _TIE or (
                        abs(imp - best_imp) <= _TIE
                        and (f < best_f or (f == best_f and thr < best_thr))):
                    best_imp = imp
                    best_f = f
                    best_thr = thr
            if visited >= max_features:
                break

        if best_f < 0:
            continue

        # partition idx[start:end] so rows with x <= thr come first
        col = XT[best_f]
        a = start
        b = end - 1
        while a <= b:
            if col[idx[a]] <= best_thr:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        feature[g] = best_f
        threshold[g] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[g] = lnode
        right[g] = rnode

        st_node[top] = rnode
        st_start[top] = a
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_start[top] = start
        st_end[top] = a
        st_depth[top] = depth + 1
        top += 1
    return n_nodes


@njit(cache=True)
def grow_forest(XT, y, tree_seeds, bootstrap, max_depth, min_leaf, max_features):
    """Grow ``len(tree_seeds)`` trees; tree ``t`` seeds ``np.random`` with ``tree_seeds[t]``
    before drawing its bootstrap rows and feature orders.

    Returns concatenated node arrays and per-tree offsets.
    """
    n = XT.shape[1]
    n_trees = tree_seeds.shape[0]
    cap = n_trees * (2 * n + 1)
    feature = np.empty(cap, np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    value = np.empty(cap)
    offsets = np.zeros(n_trees + 1, np.int64)
    idx = np.empty(n, np.int64)
    for t in range(n_trees):
        np.random.seed(tree_seeds[t])
        if bootstrap:
            for i in range(n):
                idx[i] = np.random.randint(0, n)
        else:
            for i in range(n):
                idx[i] = i
        used = _grow_into(XT, y, idx, max_depth, min_leaf, max_features,
                          feature, threshold, left, right, value, offsets[t])
        offsets[t + 1] = offsets[t] + used
    m = offsets[n_trees]
    return (feature[:m].copy(), threshold[:m].copy(), left[:m].copy(), right[:m].copy(),
            value[:m].copy(), offsets)


@njit(cache=True)
def forest_votes(feature, threshold, left, right, value, offsets, X):
    """Number of trees whose leaf value exceeds 0.5, per row of ``X``."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    votes = np.zeros(n, np.int64)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            if value[base + node] > 0.5:
                votes[i] += 1
    return votes


@njit(cache=True)
def best_stump(X, order, ys, w):
    """Weighted-error-minimising decision stump.

    The stump predicts ``polarity`` where ``x[f] <= threshold`` and
    ``-polarity`` elsewhere. ``order`` holds the per-column argsort of ``X``.
    If every column is constant, a constant stump (threshold ``inf``) is
    returned.
    """
    n, d = X.shape
    wpos = 0.0
    wneg = 0.0
    for i in range(n):
        if ys[i] > 0:
            wpos += w[i]
        else:
            wneg += w[i]
    best_err = np.inf
    best_f = -1
    best_thr = 0.0
    best_pol = 1
    for f in range(d):
        wpl = 0.0
        wnl = 0.0
        for i in range(1, n):
            k = order[i - 1, f]
            if ys[k] > 0:
                wpl += w[k]
            else:
                wnl += w[k]
            v0 = X[k, f]
            v1 = X[order[i, f], f]
            if not v1 > v0:
                continue
            e_plus = wnl + (wpos - wpl)
            e_minus = wpl + (wneg - wnl)
            if e_plus < best_err or e_minus < best_err:
                thr = 0.5 * (v0 + v1)
                if not thr < v1:
                    thr = v0
                if e_plus <= e_minus:
                    best_err = e_plus
                    best_pol = 1
                else:
                    best_err = e_minus
                    best_pol = -1
                best_f = f
                best_thr = thr
    if best_f < 0:
        best_f = 0
        best_thr = np.inf
        if wpos >= wneg:
            best_pol = 1
            best_err = wneg
        else:
            best_pol = -1
            best_err = wpos
    return best_f, best_thr, best_pol, best_err


@njit(cache=True)
def svm_objective(w, Xa, ys, lam):
    n = Xa.shape[0]
    hinge = 0.0
    for i in range(n):
        m = 1.0 - ys[i] * np.dot(Xa[i], w)
        if m > 0:
            hinge += m
    return 0.5 * lam * np.dot(w, w) + hinge / n


@njit(cache=True)
def pegasos(Xa, ys, lam, perms, project):
    """Epoch-wise Pegasos with step ``1 / (lam * t)``.

    Returns the best iterate seen at epoch ends, the best-so-far objective
    per epoch and the raw objective of each epoch-end iterate.
    """
    n, d = Xa.shape
    epochs = perms.shape[0]
    w = np.zeros(d)
    best_w = w.copy()
    best_obj = np.inf
    best_hist = np.empty(epochs)
    raw_hist = np.empty(epochs)
    radius = 1.0 / np.sqrt(lam)
    t = 0
    for e in range(epochs):
        for k in range(n):
            i = perms[e, k]
            t += 1
            eta = 1.0 / (lam * t)
            margin = ys[i] * np.dot(w, Xa[i])
            scale = 1.0 - eta * lam
            if margin < 1.0:
                step = eta * ys[i]
                for j in range(d):
                    w[j] = scale * w[j] + step * Xa[i, j]
            else:
                for j in range(d):
                    w[j] = scale * w[j]
            if project:
                nrm = np.sqrt(np.dot(w, w))
                if nrm > radius:
                    for j in range(d):
                        w[j] *= radius / nrm
        obj = svm_objective(w, Xa, ys, lam)
        raw_hist[e] = obj
        if obj < best_obj:
            best_obj = obj
            best_w[:] = w
        best_hist[e] = best_obj
    return best_w, best_hist, raw_hist
