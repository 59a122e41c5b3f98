"""Pure-Python/numpy fallback for the compiled kernels in ``_kernels.pyx``."""

from collections import deque

import numpy as np

BACKEND = "python"


def _h(pos, tot):
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tot > 0, pos / np.where(tot > 0, tot, 1.0), 0.0)
        inner = (p > 0) & (p < 1)
        ps = np.where(inner, p, 0.5)
        h = -ps * np.log2(ps) - (1.0 - ps) * np.log2(1.0 - ps)
    return np.where(inner, h, 0.0)


def bfs_centrality(n, indptr, indices):
    closeness = np.zeros(n, dtype=np.float64)
    ecc = np.zeros(n, dtype=np.float64)
    for s in range(n):
        dist = {s: 0}
        queue = deque([s])
        total = 0
        far = 0
        while queue:
            u = queue.popleft()
            du = dist[u] + 1
            for v in indices[indptr[u]:indptr[u + 1]]:
                v = int(v)
                if v not in dist:
                    dist[v] = du
                    total += du
                    far = max(far, du)
                    queue.append(v)
        if len(dist) > 1 and total > 0:
            closeness[s] = (len(dist) - 1) / total
        ecc[s] = far
    return closeness, ecc


def split_scan(xs, ys, ws):
    xs = np.asarray(xs, dtype=np.float64)
    k, m = xs.shape
    width = max(m - 1, 0)
    if width == 0:
        return np.full((k, 0), -np.inf), np.zeros((k, 0))
    wy = ws * ys
    wtot = np.sum(ws, axis=1, keepdims=True)
    ptot = np.sum(wy, axis=1, keepdims=True)
    wl = np.cumsum(ws, axis=1)[:, :width]
    pl = np.cumsum(wy, axis=1)[:, :width]
    wr = wtot - wl
    hp = _h(ptot, wtot)
    safe = np.where(wtot > 0, wtot, 1.0)
    gains = hp - (wl / safe) * _h(pl, wl) - (wr / safe) * _h(ptot - pl, wr)
    lo, hi = xs[:, :-1], xs[:, 1:]
    boundary = lo < hi
    thr = 0.5 * (lo + hi)
    thr = np.where(thr >= hi, lo, thr)
    gains = np.where(boundary, gains, -np.inf)
    return gains, np.where(boundary, thr, 0.0)


def _walk(feature, threshold, left, right, root, x):
    node = root
    path = [node]
    while feature[node] >= 0:
        node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        path.append(node)
    return path


def forest_predict(feature, threshold, left, right, value, roots, X):
    n_trees = len(roots)
    out = np.zeros(X.shape[0], dtype=np.float64)
    if n_trees == 0:
        return out
    for r in range(X.shape[0]):
        acc = 0.0
        for root in roots:
            acc += value[_walk(feature, threshold, left, right, root, X[r])[-1]]
        out[r] = acc / n_trees
    return out


def forest_contributions(feature, threshold, left, right, value, roots, X, n_features):
    n, n_trees = X.shape[0], len(roots)
    contrib = np.zeros((n, n_features), dtype=np.float64)
    if n_trees == 0:
        return np.zeros(n), contrib
    root_sum = 0.0
    for root in roots:
        root_sum += value[root]
    bias = np.full(n, root_sum / n_trees)
    for r in range(n):
        for root in roots:
            path = _walk(feature, threshold, left, right, root, X[r])
            for a, b in zip(path, path[1:]):
                f = feature[a]
                contrib[r, f] = contrib[r, f] + (value[b] - value[a]) / n_trees
    return bias, contrib
