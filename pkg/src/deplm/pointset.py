"""Point sets and the geometric primitives used by every encoding stage.

All grouping works on coordinates only. Distances are Euclidean and computed
by brute force; batched variants operate on ``(B, N, c)`` arrays where every
sample in the batch has the same point count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from deplm import _kernels

PTS_MAGIC = "DEPLM-PTS"


@dataclass
class PointSet:
    coords: np.ndarray
    feats: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] < 1 or coords.shape[1] < 1:
            raise ValueError(f"coords must be an N x c matrix with N, c >= 1, got shape {coords.shape}")
        feats = self.feats
        if feats is None:
            feats = np.zeros((coords.shape[0], 0))
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.shape[0] != coords.shape[0]:
            raise ValueError(f"coords has {coords.shape[0]} rows but feats has {feats.shape[0]}")
        if not (np.isfinite(coords).all() and np.isfinite(feats).all()):
            raise ValueError("point set contains non-finite values")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != coords.shape[0]:
                raise ValueError("labels length does not match point count")
            self.labels = labels
        self.coords = coords
        self.feats = feats

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def c(self) -> int:
        return self.coords.shape[1]

    @property
    def d(self) -> int:
        return self.feats.shape[1]

    def permuted(self, perm) -> "PointSet":
        perm = np.asarray(perm)
        labels = None if self.labels is None else self.labels[perm]
        return PointSet(self.coords[perm], self.feats[perm], labels)


@dataclass(frozen=True)
class GroupIndex:
    centers: np.ndarray  # (P,)
    members: np.ndarray  # (P, k), members[:, 0] == centers

    @property
    def k(self) -> int:
        return self.members.shape[1]


def _fps_start(coords: np.ndarray) -> np.ndarray:
    """Index of the point farthest from the centroid, per sample.

    Ties resolve to the lexicographically smallest coordinate row, then the
    lowest index, which keeps the choice independent of input order.
    """
    centroid = coords.mean(axis=1, keepdims=True)
    d0 = ((coords - centroid) ** 2).sum(axis=-1)
    start = np.argmax(d0, axis=1)
    peak = d0[np.arange(coords.shape[0]), start]
    for b in np.flatnonzero((d0 == peak[:, None]).sum(axis=1) > 1):
        cand = np.flatnonzero(d0[b] == peak[b])
        pts = coords[b, cand]
        # lexsort sorts by the last key first
        order = np.lexsort((cand,) + tuple(pts[:, j] for j in range(pts.shape[1] - 1, -1, -1)))
        start[b] = cand[order[0]]
    return start


def fps_batch(coords: np.ndarray, count: int) -> np.ndarray:
    """Farthest point sampling on ``(B, N, c)`` coordinates -> ``(B, count)`` indices."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    B, N, _ = coords.shape
    if count < 1 or count > N:
        raise ValueError(f"sample count must be in [1, {N}], got {count}")
    sel = np.empty((B, count), dtype=np.int64)
    for b, start in enumerate(_fps_start(coords)):
        _kernels.fps_one(coords[b], count, start, sel[b])
    return sel


def farthest_point_sampling(coords, count: int) -> np.ndarray:
    """Greedy max-min subset of ``count`` point indices.

    The first index is the point farthest from the centroid; each later pick
    maximizes the distance to the nearest already-picked point, with ties going
    to the lowest index.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    if not np.isfinite(coords).all():
        raise ValueError("coords must be finite")
    return fps_batch(coords[None], int(count))[0]


def knn_batch(coords: np.ndarray, centers: np.ndarray, k: int) -> np.ndarray:
    """kNN groups for ``(B, N, c)`` coords and ``(B, P)`` centers -> ``(B, P, k)`` members."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.int64)
    B, N, _ = coords.shape
    if k < 1 or k > N:
        raise ValueError(f"group size must be in [1, {N}], got {k}")
    out = np.empty((B, centers.shape[1], k), dtype=np.int64)
    for b in range(B):
        _kernels.knn_one(coords[b], centers[b], k, out[b])
    return out


def knn_group(coords, centers, k: int) -> GroupIndex:
    """Group each center with its ``k - 1`` nearest other points.

    Equal distances go to the lower index; a duplicate of the center never
    displaces it from position 0.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    centers = np.asarray(centers, dtype=np.int64).reshape(-1)
    N = coords.shape[0]
    if centers.size and (centers.min() < 0 or centers.max() >= N):
        raise ValueError("center index out of range")
    members = knn_batch(coords[None], centers[None], int(k))[0]
    return GroupIndex(centers=centers.copy(), members=members)


def nearest_batch(queries: np.ndarray, points: np.ndarray, m: int):
    """``m`` nearest ``points (B, Np, c)`` for each of ``queries (B, Nq, c)``.

    Returns ``(indices, distances)``, both ``(B, Nq, m)``, ordered by
    (distance, index).
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    B, Nq, _ = queries.shape
    idx = np.empty((B, Nq, m), dtype=np.int64)
    dist = np.empty((B, Nq, m))
    for b in range(B):
        _kernels.nearest_one(queries[b], points[b], m, idx[b], dist[b])
    return idx, dist


def pool_groups(feats: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Sum-pool ``(B, N, d)`` features over ``(B, P, k)`` groups -> ``(B, P, d)``.

    Each group is accumulated in ascending point-index order.
    """
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    B, P, _ = members.shape
    out = np.empty((B, P, feats.shape[-1]))
    for b in range(B):
        _kernels.pool_one(feats[b], members[b], out[b])
    return out


def sum_pool(features) -> np.ndarray:
    """Column-wise sum of a ``k x d`` block, rows accumulated top to bottom."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("sum_pool expects a non-empty k x d matrix")
    out = features[0].copy()
    for row in features[1:]:
        out += row
    return out


def write_pts(path, ps: PointSet) -> None:
    """Write a point set in the text points format (9 significant digits)."""
    has_labels = ps.labels is not None
    header = f"{PTS_MAGIC} 1 {ps.n} {ps.c} {ps.d} {int(has_labels)}\n"
    cols = [ps.coords, ps.feats]
    if has_labels:
        cols.append(ps.labels[:, None].astype(np.float64))
    data = np.hstack(cols)
    lines = []
    for i, row in enumerate(data):
        vals = [f"{v:.9g}" for v in row[: ps.c + ps.d]]
        if has_labels:
            vals.append(str(int(ps.labels[i])))
        lines.append(" ".join(vals))
    Path(path).write_text(header + "\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_pts(path) -> PointSet:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    head = text[0].split()
    if len(head) < 5 or head[0] != PTS_MAGIC or head[1] != "1":
        raise ValueError(f"{path}: not a {PTS_MAGIC} v1 file")
    n, c, d = int(head[2]), int(head[3]), int(head[4])
    has_labels = len(head) > 5 and head[5] == "1"
    width = c + d + int(has_labels)
    rows = [line.split() for line in text[1:] if line.strip()]
    if len(rows) != n:
        raise ValueError(f"{path}: header declares {n} points, found {len(rows)}")
    data = np.array(rows, dtype=np.float64).reshape(n, width)
    labels = data[:, -1].astype(np.int64) if has_labels else None
    return PointSet(data[:, :c], data[:, c : c + d], labels)
