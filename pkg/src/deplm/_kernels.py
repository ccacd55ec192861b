"""Compiled inner loops for grouping and pooling.

Distances are accumulated coordinate by coordinate as ``sum((a - b)**2)`` so
equal geometric distances compare exactly equal, and ties always resolve to the
lowest index.
"""

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True, fastmath=False)


@njit(**_OPTS)
def fps_one(coords, count, start, out):
    n, c = coords.shape
    mind = np.full(n, np.inf)
    cur = start
    for i in range(count):
        out[i] = cur
        mind[cur] = -1.0
        best = -np.inf
        nxt = 0
        for j in range(n):
            if mind[j] < 0.0:
                continue
            d = 0.0
            for a in range(c):
                t = coords[j, a] - coords[cur, a]
                d += t * t
            if d < mind[j]:
                mind[j] = d
            if mind[j] > best:
                best = mind[j]
                nxt = j
        cur = nxt


@njit(**_OPTS)
def _insert(kd, ki, filled, k, d, j):
    """Insert ``(d, j)`` into the sorted top-k buffers; ``j`` grows monotonically."""
    if filled == k:
        if d >= kd[k - 1]:
            return filled
        pos = k - 1
    else:
        pos = filled
        filled += 1
    while pos > 0 and kd[pos - 1] > d:
        kd[pos] = kd[pos - 1]
        ki[pos] = ki[pos - 1]
        pos -= 1
    kd[pos] = d
    ki[pos] = j
    return filled


@njit(**_OPTS)
def _sq_dists(coords, q, out):
    n, c = coords.shape
    for j in range(n):
        out[j] = 0.0
    for a in range(c):
        v = q[a]
        for j in range(n):
            t = coords[j, a] - v
            out[j] += t * t


@njit(**_OPTS)
def _select(dist, skip, m, kd, ki):
    filled = 0
    for j in range(dist.shape[0]):
        d = dist[j]
        if j == skip or (filled == m and d >= kd[m - 1]):
            continue
        filled = _insert(kd, ki, filled, m, d, j)


@njit(**_OPTS)
def knn_one(coords, centers, k, out):
    """Rows ``[center, k-1 nearest others]`` ordered by (distance, index)."""
    n = coords.shape[0]
    kd = np.empty(max(k - 1, 1))
    ki = np.empty(max(k - 1, 1), dtype=np.int64)
    dist = np.empty(n)
    for p in range(centers.shape[0]):
        ctr = centers[p]
        out[p, 0] = ctr
        if k == 1:
            continue
        _sq_dists(coords, coords[ctr], dist)
        _select(dist, ctr, k - 1, kd, ki)
        for q in range(k - 1):
            out[p, q + 1] = ki[q]


@njit(**_OPTS)
def nearest_one(queries, points, m, out_idx, out_dist):
    """For each query, the ``m`` nearest points by (distance, index); distances are Euclidean."""
    kd = np.empty(m)
    ki = np.empty(m, dtype=np.int64)
    dist = np.empty(points.shape[0])
    for q in range(queries.shape[0]):
        _sq_dists(points, queries[q], dist)
        _select(dist, -1, m, kd, ki)
        for r in range(m):
            out_idx[q, r] = ki[r]
            out_dist[q, r] = np.sqrt(kd[r])


@njit(**_OPTS)
def pool_one(feats, members, out):
    """Sum ``feats`` rows of each group in ascending index order."""
    P, k = members.shape
    d = feats.shape[1]
    order = np.empty(k, dtype=np.int64)
    for p in range(P):
        for q in range(k):
            order[q] = members[p, q]
        order.sort()
        for a in range(d):
            out[p, a] = 0.0
        for q in range(k):
            j = order[q]
            for a in range(d):
                out[p, a] += feats[j, a]
