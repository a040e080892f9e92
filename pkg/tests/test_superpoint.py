from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointmatch.core import PointCloud, SuperPointPartition
from pointmatch.superpoint import (
    ClusterConfig,
    build_superpoints,
    cached_superpoints,
    partition_purity,
    read_partition,
    write_partition,
)


def random_cloud(seed, n=50):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.random((n, 3)), rng.random((n, 3)), 3)


def same_partition(a, b):
    return np.array_equal(SuperPointPartition.from_labels(a).group_of, SuperPointPartition.from_labels(b).group_of)


def brute_force_components(cloud, cfg):
    """O(N^2) k-NN graph, cutoff edges, BFS components."""
    n = cloud.n
    pos, col = cloud.positions, cloud.colors
    adj = np.zeros((n, n), bool)
    for i in range(n):
        d = [np.sqrt(((pos[i] - pos[j]) ** 2).sum()) for j in range(n)]
        nearest = [j for j in sorted(range(n), key=lambda j: d[j]) if j != i][: cfg.k_neighbors]
        for j in nearest:
            adj[i, j] = adj[j, i] = True
    keep = np.zeros_like(adj)
    for i in range(n):
        for j in range(n):
            if adj[i, j]:
                cost = cfg.dist_weight * np.linalg.norm(pos[i] - pos[j]) + cfg.color_weight * np.linalg.norm(col[i] - col[j])
                keep[i, j] = cost <= cfg.merge_threshold
    labels = -np.ones(n, int)
    for s in range(n):
        if labels[s] >= 0:
            continue
        labels[s] = s
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(keep[u]):
                if labels[v] < 0:
                    labels[v] = s
                    queue.append(v)
    return labels


def test_two_separated_blobs():
    rng = np.random.default_rng(0)
    a = rng.normal(scale=0.02, size=(30, 3))
    b = rng.normal(scale=0.02, size=(30, 3)) + 5.0
    cloud = PointCloud(np.vstack([a, b]), np.full((60, 3), 0.5), 2)
    part = build_superpoints(cloud, ClusterConfig(k_neighbors=5, merge_threshold=1.0))
    assert part.num_groups == 2
    assert same_partition(part.group_of, np.repeat([0, 1], 30))


def test_infinite_threshold_merges_everything():
    part = build_superpoints(random_cloud(1), ClusterConfig(merge_threshold=np.inf))
    assert part.num_groups == 1


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force_single_linkage(seed):
    cloud = random_cloud(seed)
    cfg = ClusterConfig(k_neighbors=4, merge_threshold=0.35, min_group_size=1)
    assert same_partition(build_superpoints(cloud, cfg).group_of, brute_force_components(cloud, cfg))


def test_small_groups_absorbed():
    cloud = random_cloud(3)
    cfg = ClusterConfig(k_neighbors=4, merge_threshold=0.2, min_group_size=5)
    part = build_superpoints(cloud, cfg)
    assert part.sizes.min() >= 5 or part.num_groups == 1
    # absorption only merges whole cutoff components
    raw = build_superpoints(cloud, ClusterConfig(k_neighbors=4, merge_threshold=0.2, min_group_size=1))
    for g in range(raw.num_groups):
        assert np.unique(part.group_of[raw.group_of == g]).size == 1


def test_purity_examples():
    labels = np.array([0, 0, 1, 1])
    assert partition_purity(SuperPointPartition([0, 0, 1, 1], 2), labels) == 1.0
    assert partition_purity(SuperPointPartition([0, 0, 0, 0], 1), labels) == 0.5


def test_purity_matches_counting():
    rng = np.random.default_rng(7)
    part = SuperPointPartition.from_labels(rng.integers(0, 5, 30))
    labels = rng.integers(0, 3, 30)
    total = 0
    for g in range(part.num_groups):
        members = labels[part.group_of == g]
        total += max(int((members == c).sum()) for c in range(3))
    assert partition_purity(part, labels) == pytest.approx(total / 30, abs=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.6), st.floats(0.0, 0.5))
def test_threshold_monotone_before_absorption(seed, thr, extra):
    cloud = random_cloud(seed, n=40)
    lo = build_superpoints(cloud, ClusterConfig(k_neighbors=4, merge_threshold=thr, min_group_size=1))
    hi = build_superpoints(cloud, ClusterConfig(k_neighbors=4, merge_threshold=thr + extra, min_group_size=1))
    assert hi.num_groups <= lo.num_groups
    # the higher threshold only coarsens: every low-threshold group sits inside one high-threshold group
    for g in range(lo.num_groups):
        assert np.unique(hi.group_of[lo.group_of == g]).size == 1


def test_absorption_can_break_monotonicity():
    # two small fragments get absorbed at the low threshold but merge into a
    # surviving group at the high one
    cloud = random_cloud(0, n=40)
    counts = [build_superpoints(cloud, ClusterConfig(k_neighbors=4, merge_threshold=t, min_group_size=3)).num_groups
              for t in (0.25, 0.5)]
    assert counts == [6, 7]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 5]))
def test_permutation_equivariant(seed, min_size):
    cloud = random_cloud(seed, n=40)
    perm = np.random.default_rng(seed + 1).permutation(cloud.n)
    cfg = ClusterConfig(k_neighbors=4, merge_threshold=0.3, min_group_size=min_size)
    base = build_superpoints(cloud, cfg)
    shuffled = build_superpoints(PointCloud(cloud.positions[perm], cloud.colors[perm], 3), cfg)
    unpermuted = np.empty(cloud.n, int)
    unpermuted[perm] = shuffled.group_of
    assert same_partition(base.group_of, unpermuted)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 60))
def test_output_is_partition(seed, n):
    part = build_superpoints(random_cloud(seed, n=n))
    assert part.group_of.size == n
    assert part.sizes.sum() == n and part.sizes.min() >= 1


def test_single_point():
    part = build_superpoints(random_cloud(0, n=1))
    assert part.num_groups == 1


def test_partition_file_and_cache(tmp_path):
    cloud = random_cloud(4)
    part = build_superpoints(cloud)
    write_partition(tmp_path / "p.sp", part)
    assert (tmp_path / "p.sp").read_text().startswith(f"pointmatch-sp v1 50 {part.num_groups}\n")
    assert np.array_equal(read_partition(tmp_path / "p.sp").group_of, part.group_of)
    cfg = ClusterConfig()
    first = cached_superpoints(tmp_path / "s.scene", cloud, cfg)
    assert (tmp_path / f"s.{cfg.digest()}.sp").exists()
    assert np.array_equal(cached_superpoints(tmp_path / "s.scene", cloud, cfg).group_of, first.group_of)


def test_config_validation():
    with pytest.raises(ValueError):
        ClusterConfig(dist_weight=0, color_weight=0)
    with pytest.raises(ValueError):
        ClusterConfig(merge_threshold=0)
    with pytest.raises(ValueError):
        ClusterConfig(k_neighbors=0)
