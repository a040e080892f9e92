"""Synthetic labeled scenes and weak-label samplers.

A scene is a handful of axis-aligned boxes and ellipsoids scattered over a
4 m x 4 m floor. Each semantic class has a fixed prototype (primitive kind,
size, elevation, base color); classes come in pairs sharing a hue, so color
alone does not separate them once color noise is added.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeds
from .core import PointCloud, Scene, WeakLabels, read_scene, write_scene

ROOM_SIZE = 4.0


@dataclass(frozen=True)
class ClassPrototype:
    kind: str  # "box" or "ellipsoid"
    half_size: tuple[float, float, float]
    elevation: float
    color: tuple[float, float, float]


def class_prototype(c: int) -> ClassPrototype:
    pair, member = divmod(c, 2)
    hue = (pair * 0.381966) % 1.0
    value = 0.7 + 0.1 * member
    color = colorsys.hsv_to_rgb(hue, 0.65, value)
    kind = "box" if member == 0 else "ellipsoid"
    base = 0.18 + 0.06 * (pair % 3)
    half = (base * (1.0 + 0.5 * member), base, base * (0.6 + 0.4 * (pair % 2)))
    elevation = 0.0 if (pair + member) % 2 == 0 else 0.6
    return ClassPrototype(kind, half, elevation, tuple(float(v) for v in color))


@dataclass(frozen=True)
class SceneSpec:
    num_instances: int
    classes_present: tuple[int, ...]
    num_classes: int
    points_per_instance: tuple[int, int] = (60, 120)
    noise_sigma: float = 0.01
    color_noise_sigma: float = 0.08
    shading: float = 0.0
    size_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_instances < 1:
            raise ValueError("num_instances must be >= 1")
        if not self.classes_present:
            raise ValueError("classes_present must be non-empty")
        if any(not 0 <= c < self.num_classes for c in self.classes_present):
            raise ValueError("classes_present outside [0, num_classes)")
        lo, hi = self.points_per_instance
        if lo < 1 or hi < lo:
            raise ValueError(f"empty points_per_instance range {self.points_per_instance}")
        if self.noise_sigma < 0 or self.color_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.shading < 1.0:
            raise ValueError("shading must be in [0, 1)")
        if not self.size_scale > 0:
            raise ValueError("size_scale must be > 0 (zero-volume instances)")


def _box_surface(rng, half, n):
    # pick faces proportional to area, then a uniform point on the face
    hx, hy, hz = half
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.uniform(-1.0, 1.0, size=(n, 3)) * np.asarray(half)
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    uv[np.arange(n), axis] = sign * np.asarray(half)[axis]
    return uv


def _ellipsoid_surface(rng, radii, n):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * np.asarray(radii)


def generate_scene(spec: SceneSpec) -> Scene:
    """Sample a labeled scene; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    classes = list(rng.permutation(spec.classes_present))
    if spec.num_instances > len(classes):
        extra = rng.choice(spec.classes_present, size=spec.num_instances - len(classes))
        classes.extend(int(c) for c in extra)
    classes = classes[: spec.num_instances]

    pos, col, lab, inst, prims = [], [], [], [], []
    for i, c in enumerate(classes):
        proto = class_prototype(int(c))
        half = np.asarray(proto.half_size) * spec.size_scale * rng.uniform(0.85, 1.15)
        if np.any(half <= 0):
            raise ValueError(f"instance {i} has zero volume")
        n = int(rng.integers(spec.points_per_instance[0], spec.points_per_instance[1] + 1))
        if proto.kind == "box":
            local = _box_surface(rng, half, n)
        else:
            local = _ellipsoid_surface(rng, half, n)
        center = np.array([
            rng.uniform(0.5, ROOM_SIZE - 0.5),
            rng.uniform(0.5, ROOM_SIZE - 0.5),
            proto.elevation + half[2],
        ])
        p = local + center
        prims.append((proto.kind, center, half, int(c)))
        if spec.noise_sigma > 0:
            p = p + rng.normal(scale=spec.noise_sigma, size=p.shape)
        color = np.asarray(proto.color) + rng.normal(scale=0.03, size=3)  # per-instance tint
        # darker toward the bottom of the instance
        rel_height = (local[:, 2] + half[2]) / (2 * half[2])
        cc = color * (1.0 - spec.shading * (1.0 - rel_height))[:, None]
        if spec.color_noise_sigma > 0:
            cc = cc + rng.normal(scale=spec.color_noise_sigma, size=(n, 3))
        pos.append(p)
        col.append(np.clip(cc, 0.0, 1.0))
        lab.append(np.full(n, c))
        inst.append(np.full(n, i))

    cloud = PointCloud(np.vstack(pos), np.vstack(col), spec.num_classes, np.concatenate(lab))
    return Scene(cloud, np.concatenate(inst), tuple(prims))


# ---------------------------------------------------------------------------
# weak supervision

@dataclass(frozen=True)
class WeakScheme:
    """One of ``ratio`` (fraction of points), ``points`` (k per scene) or ``oneclick``."""

    kind: str
    value: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == "ratio":
            if self.value is None or not 0.0 < self.value <= 1.0:
                raise ValueError("ratio fraction must be in (0, 1]")
        elif self.kind == "points":
            if self.value is None or int(self.value) != self.value or self.value < 1:
                raise ValueError("points-per-scene k must be an integer >= 1")
        elif self.kind == "oneclick":
            pass
        else:
            raise ValueError(f"unknown weak scheme {self.kind!r}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> WeakScheme:
        """Parse ``ratio:F``, ``points:K`` or ``oneclick``."""
        kind, _, arg = text.partition(":")
        if kind == "oneclick":
            if arg:
                raise ValueError("oneclick takes no argument")
            return cls("oneclick", None, seed)
        if not arg:
            raise ValueError(f"scheme {text!r} needs an argument")
        value = float(arg) if kind == "ratio" else int(arg)
        return cls(kind, value, seed)

    def __str__(self):
        if self.kind == "oneclick":
            return "oneclick"
        return f"{self.kind}:{self.value:g}"


def sample_weak_labels(cloud: PointCloud, instance_ids, scheme: WeakScheme) -> WeakLabels:
    if cloud.gt_labels is None:
        raise ValueError("weak labels need ground-truth labels")
    rng = np.random.default_rng(scheme.seed)
    n = cloud.n
    if scheme.kind == "ratio":
        # floor at one label per scene; an empty set leaves the supervised loss undefined
        k = max(1, int(round(scheme.value * n)))
        idx = rng.choice(n, size=min(k, n), replace=False)
    elif scheme.kind == "points":
        idx = rng.choice(n, size=min(int(scheme.value), n), replace=False)
    else:
        if instance_ids is None:
            raise ValueError("oneclick sampling needs instance ids")
        instance_ids = np.asarray(instance_ids)
        idx = np.array([rng.choice(np.flatnonzero(instance_ids == i)) for i in np.unique(instance_ids)])
    idx = np.sort(idx)
    return WeakLabels(idx, cloud.gt_labels[idx], n, cloud.num_classes)


WEAK_MAGIC = "pointmatch-weak v1"


def write_weak_labels(path, weak: WeakLabels) -> None:
    lines = [f"{WEAK_MAGIC} {len(weak)}"]
    lines += [f"{i} {c}" for i, c in zip(weak.labeled_indices, weak.classes)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_weak_labels(path, n: int, num_classes: int) -> WeakLabels:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != WEAK_MAGIC.split() or len(header) != 3:
            raise ValueError(f"{path}: not a {WEAK_MAGIC} file")
        data = np.loadtxt(fh, ndmin=2, dtype=np.int64).reshape(-1, 2)
    if data.shape[0] != int(header[2]):
        raise ValueError(f"{path}: header says {header[2]} labels, found {data.shape[0]}")
    return WeakLabels(data[:, 0], data[:, 1], n, num_classes)


INST_MAGIC = "pointmatch-inst v1"


def write_instances(path, instance_ids) -> None:
    ids = np.asarray(instance_ids)
    Path(path).write_text(f"{INST_MAGIC} {ids.size}\n" + "\n".join(map(str, ids)) + "\n")


def read_instances(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != INST_MAGIC.split():
            raise ValueError(f"{path}: not a {INST_MAGIC} file")
        ids = np.loadtxt(fh, dtype=np.int64, ndmin=1)
    if ids.size != int(header[2]):
        raise ValueError(f"{path}: expected {header[2]} instance ids")
    return ids


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True)
class DatasetSpec:
    n_train: int = 50
    n_val: int = 10
    num_classes: int = 8
    instances_per_scene: tuple[int, int] = (3, 6)
    points_per_instance: tuple[int, int] = (60, 120)
    noise_sigma: float = 0.01
    color_noise_sigma: float = 0.15
    shading: float = 0.6
    seed: int = 0


def scene_spec_for(ds: DatasetSpec, index: int) -> SceneSpec:
    rng = seeds.stream(ds.seed, "scenegen", index)
    lo, hi = ds.instances_per_scene
    k = int(rng.integers(lo, hi + 1))
    present = tuple(int(c) for c in np.sort(rng.choice(ds.num_classes, size=min(k, ds.num_classes), replace=False)))
    return SceneSpec(
        num_instances=k,
        classes_present=present,
        num_classes=ds.num_classes,
        points_per_instance=ds.points_per_instance,
        noise_sigma=ds.noise_sigma,
        color_noise_sigma=ds.color_noise_sigma,
        shading=ds.shading,
        seed=seeds.derive_seed(ds.seed, "scenegen", index, 1),
    )


def generate_dataset(ds: DatasetSpec) -> tuple[list[Scene], list[Scene]]:
    scenes = [generate_scene(scene_spec_for(ds, i)) for i in range(ds.n_train + ds.n_val)]
    return scenes[: ds.n_train], scenes[ds.n_train:]


def weak_labels_for(scenes, scheme_text: str, root_seed: int) -> list[WeakLabels]:
    out = []
    for i, s in enumerate(scenes):
        scheme = WeakScheme.parse(scheme_text, seed=seeds.derive_seed(root_seed, "weaklabels", i))
        out.append(sample_weak_labels(s.cloud, s.instance_ids, scheme))
    return out


MANIFEST_MAGIC = "manifest v1"


def scene_path(root, split: str, index: int) -> Path:
    return Path(root) / f"{split}_{index:04d}.scene"


def write_dataset(root, ds: DatasetSpec) -> Path:
    """Write every scene plus its instance-id sidecar and a manifest index."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    train, val = generate_dataset(ds)
    rows = [MANIFEST_MAGIC]
    for split, group in (("train", train), ("val", val)):
        for i, scene in enumerate(group):
            path = scene_path(root, split, i)
            write_scene(path, scene.cloud)
            write_instances(path.with_suffix(".inst"), scene.instance_ids)
            index = i if split == "train" else ds.n_train + i
            rows.append(f"{split} {path.name} {scene.cloud.n} {scene.cloud.num_classes} "
                        f"{scene_spec_for(ds, index).seed}")
    (root / "manifest.txt").write_text("\n".join(rows) + "\n")
    return root / "manifest.txt"


def read_dataset(root) -> tuple[list[Scene], list[Scene]]:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no dataset manifest at {manifest}")
    lines = manifest.read_text().splitlines()
    if not lines or lines[0] != MANIFEST_MAGIC:
        raise ValueError(f"{manifest}: not a {MANIFEST_MAGIC} file")
    splits = {"train": [], "val": []}
    for line in lines[1:]:
        split, fname, n, c, _seed = line.split()
        cloud = read_scene(root / fname)
        if cloud.n != int(n) or cloud.num_classes != int(c):
            raise ValueError(f"{fname}: manifest says N={n} C={c}")
        inst_path = (root / fname).with_suffix(".inst")
        ids = read_instances(inst_path) if inst_path.exists() else None
        splits[split].append(Scene(cloud, ids))
    return splits["train"], splits["val"]
