"""Greedy low-level clustering of a scene into super-points.

Edges of a symmetric k-NN graph are weighted by a blend of positional and
color distance; components are grown with union-find over edges whose cost
stays under ``merge_threshold`` (single linkage with a cutoff). Groups that
end up smaller than ``min_group_size`` are then folded into the neighboring
group with the nearest centroid.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud, SuperPointPartition


@dataclass(frozen=True)
class ClusterConfig:
    k_neighbors: int = 8
    dist_weight: float = 1.0
    color_weight: float = 0.5
    merge_threshold: float = 0.2
    min_group_size: int = 5

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.dist_weight < 0 or self.color_weight < 0:
            raise ValueError("weights must be >= 0")
        if self.dist_weight == 0 and self.color_weight == 0:
            raise ValueError("dist_weight and color_weight cannot both be zero")
        if not self.merge_threshold > 0:
            raise ValueError("merge_threshold must be > 0")
        if self.min_group_size < 1:
            raise ValueError("min_group_size must be >= 1")

    def digest(self) -> str:
        text = ",".join(f"{k}={v!r}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


class UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return int(root)

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        # smaller root index wins, keeps the result independent of call order
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True

    def labels(self) -> np.ndarray:
        return np.array([self.find(i) for i in range(self.parent.size)])


def knn_edges(cloud: PointCloud, cfg: ClusterConfig):
    """Undirected k-NN edges ``(i, j, cost)`` with i < j, sorted by (cost, i, j)."""
    n = cloud.n
    if n == 1:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    k = min(cfg.k_neighbors, n - 1)
    _, nbr = cKDTree(cloud.positions).query(cloud.positions, k=k + 1)
    src = np.repeat(np.arange(n), k + 1)
    dst = nbr.reshape(-1)
    keep = src != dst
    i = np.minimum(src[keep], dst[keep])
    j = np.maximum(src[keep], dst[keep])
    pairs = np.unique(np.stack([i, j], axis=1), axis=0)
    i, j = pairs[:, 0], pairs[:, 1]
    cost = edge_cost(cloud, cfg, i, j)
    order = np.lexsort((j, i, cost))
    return i[order], j[order], cost[order]


def edge_cost(cloud: PointCloud, cfg: ClusterConfig, i, j) -> np.ndarray:
    dpos = np.linalg.norm(cloud.positions[i] - cloud.positions[j], axis=-1)
    dcol = np.linalg.norm(cloud.colors[i] - cloud.colors[j], axis=-1)
    return cfg.dist_weight * dpos + cfg.color_weight * dcol


def _absorb_small_groups(cloud, cfg, labels, edge_i, edge_j):
    """Fold undersized groups into their nearest-centroid neighbor group.

    All undersized groups pick a target simultaneously each round, so the
    outcome does not depend on any processing order.
    """
    feats = np.hstack([cloud.positions, cloud.colors])
    while True:
        part = SuperPointPartition.from_labels(labels)
        g, m = part.group_of, part.num_groups
        sizes = part.sizes
        small = np.flatnonzero(sizes < cfg.min_group_size)
        if small.size == 0 or m == 1:
            return part
        centroids = np.zeros((m, 6))
        np.add.at(centroids, g, feats)
        centroids /= sizes[:, None]
        gi, gj = g[edge_i], g[edge_j]
        cross = gi != gj
        adj: dict[int, set] = {}
        for a, b in zip(gi[cross].tolist(), gj[cross].tolist()):
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        uf = UnionFind(m)
        for s in small:
            cand = np.array(sorted(adj.get(int(s), ())), dtype=np.int64)
            if cand.size == 0:
                cand = np.delete(np.arange(m), s)
            d = (cfg.dist_weight * np.linalg.norm(centroids[cand, :3] - centroids[s, :3], axis=1)
                 + cfg.color_weight * np.linalg.norm(centroids[cand, 3:] - centroids[s, 3:], axis=1))
            uf.union(int(s), int(cand[np.argmin(d)]))
        labels = uf.labels()[g]


def build_superpoints(cloud: PointCloud, cfg: ClusterConfig = ClusterConfig()) -> SuperPointPartition:
    i, j, cost = knn_edges(cloud, cfg)
    uf = UnionFind(cloud.n)
    for a, b in zip(i[cost <= cfg.merge_threshold].tolist(), j[cost <= cfg.merge_threshold].tolist()):
        uf.union(a, b)
    labels = uf.labels()
    if cfg.min_group_size > 1:
        return _absorb_small_groups(cloud, cfg, labels, i, j)
    return SuperPointPartition.from_labels(labels)


def partition_purity(part: SuperPointPartition, labels) -> float:
    """Fraction of points carrying their group's majority label."""
    labels = np.asarray(labels)
    if labels.shape != part.group_of.shape:
        raise ValueError("labels must have one entry per point")
    counts = np.zeros((part.num_groups, int(labels.max()) + 1), dtype=np.int64)
    np.add.at(counts, (part.group_of, labels), 1)
    return float(counts.max(axis=1).sum() / labels.size)


SP_MAGIC = "pointmatch-sp v1"


def write_partition(path, part: SuperPointPartition) -> None:
    body = "\n".join(map(str, part.group_of))
    Path(path).write_text(f"{SP_MAGIC} {part.group_of.size} {part.num_groups}\n{body}\n")


def read_partition(path) -> SuperPointPartition:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != SP_MAGIC.split() or len(header) != 4:
            raise ValueError(f"{path}: not a {SP_MAGIC} file")
        g = np.loadtxt(fh, dtype=np.int64, ndmin=1)
    if g.size != int(header[2]):
        raise ValueError(f"{path}: expected {header[2]} group ids, found {g.size}")
    return SuperPointPartition(g, int(header[3]))


def cached_superpoints(scene_path, cloud: PointCloud, cfg: ClusterConfig) -> SuperPointPartition:
    """Partition cached next to the scene file, keyed by the config digest."""
    scene_path = Path(scene_path)
    cache = scene_path.with_name(f"{scene_path.stem}.{cfg.digest()}.sp")
    if cache.exists():
        part = read_partition(cache)
        if part.group_of.size == cloud.n:
            return part
    part = build_superpoints(cloud, cfg)
    write_partition(cache, part)
    return part
