# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Semantics mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log2, INFINITY

cnp.import_array()

BACKEND = "cython"


cdef inline double _h(double pos, double tot) noexcept nogil:
    if tot <= 0.0:
        return 0.0
    cdef double p = pos / tot
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * log2(p) - (1.0 - p) * log2(1.0 - p)


def bfs_centrality(int n, const int[::1] indptr, const int[::1] indices):
    """Closeness (component-normalized) and eccentricity on an undirected CSR graph."""
    closeness = np.zeros(n, dtype=np.float64)
    ecc = np.zeros(n, dtype=np.float64)
    cdef double[::1] clo_v = closeness
    cdef double[::1] ecc_v = ecc
    cdef int[::1] dist = np.empty(max(n, 1), dtype=np.int32)
    cdef int[::1] queue = np.empty(max(n, 1), dtype=np.int32)
    cdef int s, head, tail, u, v, k, reached, far
    cdef long total
    with nogil:
        for s in range(n):
            for k in range(n):
                dist[k] = -1
            dist[s] = 0
            queue[0] = s
            head = 0
            tail = 1
            total = 0
            far = 0
            while head < tail:
                u = queue[head]
                head += 1
                for k in range(indptr[u], indptr[u + 1]):
                    v = indices[k]
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        total += dist[v]
                        if dist[v] > far:
                            far = dist[v]
                        queue[tail] = v
                        tail += 1
            reached = tail
            if reached > 1 and total > 0:
                clo_v[s] = (reached - 1) / <double>total
            ecc_v[s] = far
    return closeness, ecc


def split_scan(const double[:, ::1] xs, const double[:, ::1] ys, const double[:, ::1] ws):
    """Entropy gain at every midpoint boundary of pre-sorted rows.

    Returns ``(gains, thresholds)`` of shape (k, m-1); positions that are not
    a boundary between distinct values get gain ``-inf``.
    """
    cdef Py_ssize_t k = xs.shape[0], m = xs.shape[1]
    cdef Py_ssize_t width = m - 1 if m > 1 else 0
    gains = np.full((k, width), -np.inf, dtype=np.float64)
    thresholds = np.zeros((k, width), dtype=np.float64)
    cdef double[:, ::1] g = gains
    cdef double[:, ::1] t = thresholds
    cdef Py_ssize_t j, i
    cdef double wtot, ptot, wl, pl, hp, thr
    with nogil:
        for j in range(k):
            wtot = 0.0
            ptot = 0.0
            for i in range(m):
                wtot = wtot + ws[j, i]
                ptot = ptot + ws[j, i] * ys[j, i]
            hp = _h(ptot, wtot)
            if wtot <= 0.0:
                wtot = 1.0  # all-zero weights: every gain is 0
            wl = 0.0
            pl = 0.0
            for i in range(width):
                wl = wl + ws[j, i]
                pl = pl + ws[j, i] * ys[j, i]
                if xs[j, i] < xs[j, i + 1]:
                    thr = 0.5 * (xs[j, i] + xs[j, i + 1])
                    if thr >= xs[j, i + 1]:
                        thr = xs[j, i]
                    t[j, i] = thr
                    g[j, i] = hp - (wl / wtot) * _h(pl, wl) - ((wtot - wl) / wtot) * _h(ptot - pl, wtot - wl)
    return gains, thresholds


def forest_predict(const int[::1] feature, const double[::1] threshold,
                   const int[::1] left, const int[::1] right,
                   const double[::1] value, const int[::1] roots,
                   const double[:, ::1] X):
    """Mean leaf ATS-probability over all trees, per row."""
    cdef Py_ssize_t n = X.shape[0], n_trees = roots.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t r, t
    cdef int node
    cdef double acc
    with nogil:
        for r in range(n):
            acc = 0.0
            for t in range(n_trees):
                node = roots[t]
                while feature[node] >= 0:
                    if X[r, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                acc = acc + value[node]
            o[r] = acc / n_trees if n_trees > 0 else 0.0
    return out


def forest_contributions(const int[::1] feature, const double[::1] threshold,
                         const int[::1] left, const int[::1] right,
                         const double[::1] value, const int[::1] roots,
                         const double[:, ::1] X, int n_features):
    """Per-row bias and per-feature contributions (decision-path deltas)."""
    cdef Py_ssize_t n = X.shape[0], n_trees = roots.shape[0]
    bias = np.zeros(n, dtype=np.float64)
    contrib = np.zeros((n, n_features), dtype=np.float64)
    cdef double[::1] b = bias
    cdef double[:, ::1] c = contrib
    cdef Py_ssize_t r, t
    cdef int node, nxt, f
    cdef double root_sum = 0.0
    for t in range(n_trees):
        root_sum += value[roots[t]]
    with nogil:
        for r in range(n):
            b[r] = root_sum / n_trees if n_trees > 0 else 0.0
            for t in range(n_trees):
                node = roots[t]
                while feature[node] >= 0:
                    f = feature[node]
                    if X[r, f] <= threshold[node]:
                        nxt = left[node]
                    else:
                        nxt = right[node]
                    c[r, f] = c[r, f] + (value[nxt] - value[node]) / n_trees
                    node = nxt
    return bias, contrib
