"""Superpoint generation: normal-based graph segmentation over a kNN graph.

The graph connects each point to its k nearest Euclidean neighbors with edge
weight 1 - |n_i . n_j|, so coplanar neighbors cost 0 and perpendicular ones
cost 1.  Felzenszwalb-Huttenlocher merging then grows components whose
internal normal variation stays below the adaptive threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .scene import SuperpointPartition


@dataclass(frozen=True)
class SegParams:
    knn: int = 10
    threshold_k: float = 0.05
    min_size: int = 20

    def __post_init__(self):
        if self.knn < 1 or self.threshold_k <= 0 or self.min_size < 1:
            raise ValueError("invalid segmentation parameters")


@dataclass
class PointGraph:
    """Undirected weighted graph over point indices; each pair stored once."""

    edges: np.ndarray   # (E, 2) int64, i < j
    weights: np.ndarray  # (E,) float64, >= 0
    node_count: int


def estimate_normals(points: np.ndarray, knn: int):
    """Per-point unit normals from the covariance of the kNN neighborhood.

    The neighborhood is the knn nearest points including the point itself.
    Normals take the smallest-eigenvalue eigenvector, sign-oriented toward
    +z (then +y, then +x when perpendicular).  Neighborhoods of rank < 2
    fall back to +z and are flagged.

    Returns (normals (N,3) float32, degenerate (N,) bool).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < 3 or knn < 3:
        raise ValueError("need at least 3 points and knn >= 3")
    k = min(knn, n)
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    nbrs = pts[idx]                       # (N, k, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]

    scale = np.maximum(eigvals[:, 2], 1e-300)
    degenerate = (eigvals[:, 1] / scale < 1e-10) | (eigvals[:, 2] < 1e-20)
    normals[degenerate] = (0.0, 0.0, 1.0)

    # Deterministic sign: prefer +z, break exact ties toward +y then +x.
    flip = (normals[:, 2] < 0)
    zz = normals[:, 2] == 0
    flip |= zz & (normals[:, 1] < 0)
    flip |= zz & (normals[:, 1] == 0) & (normals[:, 0] < 0)
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return normals.astype(np.float32), degenerate


def build_normal_graph(points: np.ndarray, normals: np.ndarray, knn: int) -> PointGraph:
    """kNN graph weighted by 1 - |n_i . n_j| (orientation-invariant)."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    k = min(knn + 1, n)
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    idx = np.atleast_2d(idx)

    src = np.repeat(np.arange(n, dtype=np.int64), idx.shape[1])
    dst = idx.astype(np.int64).ravel()
    keep = src != dst
    src, dst = src[keep], dst[keep]
    # Drop the self column but keep at most knn neighbors per point.
    counts = np.bincount(src, minlength=n)
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    rank = np.arange(src.size) - np.repeat(np.cumsum(counts) - counts, counts)
    keep = rank < knn
    src, dst = src[keep], dst[keep]

    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)

    nrm = np.asarray(normals, dtype=np.float64)
    dots = np.abs(np.einsum("ij,ij->i", nrm[pairs[:, 0]], nrm[pairs[:, 1]]))
    weights = np.clip(1.0 - dots, 0.0, None)
    return PointGraph(edges=pairs, weights=weights, node_count=n)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, x: int) -> int:
        root = x
        parent = self.parent
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


def fh_segment(graph: PointGraph, params: SegParams) -> SuperpointPartition:
    """Felzenszwalb-Huttenlocher segmentation of a weighted point graph.

    Edges are processed in ascending weight (ties by (i, j) order); two
    components merge when the edge weight does not exceed either side's
    internal difference plus k/|C|.  Components smaller than min_size are
    then folded into their lowest-weight neighbor.
    """
    n = graph.node_count
    uf = _UnionFind(n)
    internal = np.zeros(n, dtype=np.float64)

    order = np.lexsort((graph.edges[:, 1], graph.edges[:, 0], graph.weights))
    edges = graph.edges[order]
    weights = graph.weights[order]

    for (i, j), w in zip(edges, weights):
        ri, rj = uf.find(i), uf.find(j)
        if ri == rj:
            continue
        ti = internal[ri] + params.threshold_k / uf.size[ri]
        tj = internal[rj] + params.threshold_k / uf.size[rj]
        if w <= min(ti, tj):
            root = uf.union(ri, rj)
            internal[root] = w  # ascending order keeps this the running max

    if params.min_size > 1:
        for (i, j), w in zip(edges, weights):
            ri, rj = uf.find(i), uf.find(j)
            if ri == rj:
                continue
            if uf.size[ri] < params.min_size or uf.size[rj] < params.min_size:
                uf.union(ri, rj)

    if n == 0:
        return SuperpointPartition(assignment=np.empty(0, dtype=np.int32),
                                   superpoint_count=0)
    roots = np.array([uf.find(i) for i in range(n)], dtype=np.int64)
    # Canonical dense ids: first appearance in point order.
    _, inverse = np.unique(roots, return_inverse=True)
    first = np.full(int(inverse.max()) + 1, -1, dtype=np.int64)
    next_id = 0
    for a in inverse:
        if first[a] < 0:
            first[a] = next_id
            next_id += 1
    assignment = first[inverse]
    return SuperpointPartition(assignment=assignment.astype(np.int32),
                               superpoint_count=int(next_id))


def compute_superpoints(points: np.ndarray, params: SegParams = SegParams(),
                        normals: np.ndarray | None = None) -> SuperpointPartition:
    """Normals (estimated if absent) -> kNN graph -> FH partition."""
    if normals is None:
        normals, _ = estimate_normals(points, max(params.knn, 3))
    graph = build_normal_graph(points, normals, params.knn)
    return fh_segment(graph, params)
