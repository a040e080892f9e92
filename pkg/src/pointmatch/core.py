"""Domain types shared by every stage of the pipeline.

All containers are frozen dataclasses holding numpy arrays. Arrays are made
read-only on construction so a value can be handed to several consumers
without defensive copies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_DIM_RAW = 6  # xyz + rgb
ROW_SUM_TOL = 1e-9


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray
    num_classes: int
    gt_labels: np.ndarray | None = None

    def __post_init__(self):
        pos = _frozen(self.positions, np.float64)
        col = _frozen(self.colors, np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be N x 3, got {pos.shape}")
        if col.shape != pos.shape:
            raise ValueError(f"colors shape {col.shape} does not match positions {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if not (np.isfinite(pos).all() and np.isfinite(col).all()):
            raise ValueError("non-finite coordinate or color")
        if col.min() < 0.0 or col.max() > 1.0:
            raise ValueError("colors must lie in [0, 1]")
        if int(self.num_classes) < 1:
            raise ValueError("num_classes must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        object.__setattr__(self, "num_classes", int(self.num_classes))
        if self.gt_labels is not None:
            gt = _frozen(self.gt_labels, np.int64)
            if gt.shape != (pos.shape[0],):
                raise ValueError("gt_labels must have one entry per point")
            if gt.size and (gt.min() < 0 or gt.max() >= self.num_classes):
                raise ValueError("gt label out of range")
            object.__setattr__(self, "gt_labels", gt)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def with_geometry(self, positions, colors) -> PointCloud:
        """Same points and labels, new coordinates/colors (used by augmentation)."""
        return PointCloud(positions, colors, self.num_classes, self.gt_labels)


@dataclass(frozen=True)
class WeakLabels:
    """Sparse annotation: sorted labeled indices and their classes."""

    labeled_indices: np.ndarray
    classes: np.ndarray
    n: int
    num_classes: int

    def __post_init__(self):
        idx = _frozen(self.labeled_indices, np.int64).reshape(-1)
        cls = _frozen(self.classes, np.int64).reshape(-1)
        if idx.shape != cls.shape:
            raise ValueError("labeled_indices and classes differ in length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("labeled indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.n:
                bad = int(idx[0] if idx[0] < 0 else idx[-1])
                raise ValueError(f"labeled index {bad} out of range for n={self.n}")
            bad_cls = np.flatnonzero((cls < 0) | (cls >= self.num_classes))
            if bad_cls.size:
                raise ValueError(
                    f"class {int(cls[bad_cls[0]])} at labeled index {int(idx[bad_cls[0]])} "
                    f"out of range for C={self.num_classes}"
                )
        object.__setattr__(self, "labeled_indices", idx)
        object.__setattr__(self, "classes", cls)

    def __len__(self) -> int:
        return int(self.labeled_indices.size)

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n), self.labeled_indices)

    def one_hot(self) -> np.ndarray:
        return one_hot_extend(self, self.n, self.num_classes)


@dataclass(frozen=True)
class SuperPointPartition:
    group_of: np.ndarray
    num_groups: int

    def __post_init__(self):
        g = _frozen(self.group_of, np.int64).reshape(-1)
        m = int(self.num_groups)
        if g.size < 1:
            raise ValueError("partition must cover at least one point")
        if g.min() < 0 or g.max() >= m:
            raise ValueError("group id out of range")
        if np.unique(g).size != m:
            raise ValueError("every group id in [0, M) must be used")
        object.__setattr__(self, "group_of", g)
        object.__setattr__(self, "num_groups", m)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.num_groups)

    @classmethod
    def singletons(cls, n: int) -> SuperPointPartition:
        return cls(np.arange(n), n)

    @classmethod
    def from_labels(cls, labels) -> SuperPointPartition:
        """Canonical relabeling: groups numbered by first appearance."""
        labels = np.asarray(labels).reshape(-1)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        return cls(rank[inverse], order.size)


@dataclass(frozen=True)
class PseudoLabel:
    classes: np.ndarray
    mask: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        cls = _frozen(self.classes, np.int64).reshape(-1)
        mask = _frozen(self.mask, bool).reshape(-1)
        conf = _frozen(self.confidences, np.float64).reshape(-1)
        if not (cls.shape == mask.shape == conf.shape):
            raise ValueError("pseudo-label arrays differ in length")
        object.__setattr__(self, "classes", cls)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "confidences", conf)

    @property
    def mask_rate(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0


def check_prob_matrix(q: np.ndarray, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Assert `q` is row-stochastic and return it as float64."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2:
        raise ValueError(f"probability matrix must be 2-D, got shape {q.shape}")
    if not np.isfinite(q).all() or q.min() < 0.0 or q.max() > 1.0:
        raise ValueError("probabilities must be finite and in [0, 1]")
    err = np.abs(q.sum(axis=1) - 1.0)
    if err.size and err.max() > tol:
        raise ValueError(f"row {int(err.argmax())} sums to 1 +/- {err.max():.3g}")
    return q


def one_hot_extend(weak: WeakLabels, n: int, c: int) -> np.ndarray:
    if len(weak) and weak.labeled_indices[-1] >= n:
        raise ValueError(f"labeled index {int(weak.labeled_indices[-1])} out of range for n={n}")
    bad = np.flatnonzero(weak.classes >= c)
    if bad.size:
        raise ValueError(f"class out of range at labeled index {int(weak.labeled_indices[bad[0]])}")
    y = np.zeros((n, c))
    y[weak.labeled_indices, weak.classes] = 1.0
    return y


def row_argmax(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row winning class and its probability.

    np.argmax returns the first maximal index, so ties go to the lowest class.
    """
    q = np.asarray(q, dtype=np.float64)
    classes = np.argmax(q, axis=1)
    return classes, q[np.arange(q.shape[0]), classes]


# ---------------------------------------------------------------------------
# scene file i/o

SCENE_MAGIC = "pointmatch-scene v1"


def write_scene(path, cloud: PointCloud) -> None:
    """Text format: header then `x y z r g b label` rows, 9 significant digits.

    Labels are 0-based class indices; -1 marks an unknown label.
    """
    labels = cloud.gt_labels if cloud.gt_labels is not None else np.full(cloud.n, -1)
    lines = [f"{SCENE_MAGIC} {cloud.n} {cloud.num_classes}"]
    for p, c, lab in zip(cloud.positions, cloud.colors, labels):
        lines.append(
            " ".join(f"{v:.9g}" for v in (*p, *c)) + f" {int(lab)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_scene(path) -> PointCloud:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != SCENE_MAGIC.split() or len(header) != 4:
            raise ValueError(f"{path}: not a {SCENE_MAGIC} file")
        n, c = int(header[2]), int(header[3])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (n, 7):
        raise ValueError(f"{path}: expected {n} rows of 7 values, got {data.shape}")
    labels = data[:, 6].astype(np.int64)
    gt = None if np.all(labels == -1) else labels
    if gt is not None and np.any(gt < 0):
        raise ValueError(f"{path}: scene mixes known and unknown labels")
    return PointCloud(data[:, :3], data[:, 3:6], c, gt)


@dataclass(frozen=True)
class Scene:
    """A cloud bundled with its instance ids (kept apart from semantic labels)."""

    cloud: PointCloud
    instance_ids: np.ndarray = field(default=None)
    primitives: tuple = ()  # (kind, center, half_size, class) per instance when known

    def __post_init__(self):
        if self.instance_ids is not None:
            ids = _frozen(self.instance_ids, np.int64)
            if ids.shape != (self.cloud.n,):
                raise ValueError("instance_ids must have one entry per point")
            object.__setattr__(self, "instance_ids", ids)
