"""Scene-level augmentation producing index-aligned views.

Seven transform families are available: scaling, flipping, offsetting,
rotation about z, affine shear, position jitter and color jitter. Each view
enables a random subset (at least one family). Geometric families compose
into a single affine map about the scene centroid; jitter is added after.
Point order is never changed, so row i of any view is point i of the source.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import PointCloud

FAMILIES = ("scale", "flip", "offset", "rotation", "affine", "pos_jitter", "color_jitter")


@dataclass(frozen=True)
class AugmentPolicy:
    scale_range: tuple[float, float] = (0.9, 1.1)
    rotation: tuple[float, float] = (-np.pi, np.pi)
    flip_prob: tuple[float, float] = (0.5, 0.5)
    offset_range: float = 0.2
    affine_shear_range: float = 0.1
    pos_jitter_sigma: float = 0.01
    color_jitter_sigma: float = 0.03
    family_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid scale_range {self.scale_range}")
        if self.rotation[0] > self.rotation[1]:
            raise ValueError("rotation range is reversed")
        if any(not 0.0 <= p <= 1.0 for p in self.flip_prob):
            raise ValueError("flip probabilities must be in [0, 1]")
        if not 0.0 <= self.family_prob <= 1.0:
            raise ValueError("family_prob must be in [0, 1]")
        if min(self.offset_range, self.affine_shear_range, self.pos_jitter_sigma, self.color_jitter_sigma) < 0:
            raise ValueError("ranges and sigmas must be >= 0")

    @classmethod
    def identity(cls, seed: int = 0) -> AugmentPolicy:
        return cls((1.0, 1.0), (0.0, 0.0), (0.0, 0.0), 0.0, 0.0, 0.0, 0.0, seed=seed)

    def scaled(self, strength: float) -> AugmentPolicy:
        """Same policy with every magnitude multiplied by ``strength``."""
        lo, hi = self.scale_range
        return replace(
            self,
            scale_range=(1.0 + strength * (lo - 1.0), 1.0 + strength * (hi - 1.0)),
            rotation=(strength * self.rotation[0], strength * self.rotation[1]),
            offset_range=strength * self.offset_range,
            affine_shear_range=strength * self.affine_shear_range,
            pos_jitter_sigma=strength * self.pos_jitter_sigma,
            color_jitter_sigma=strength * self.color_jitter_sigma,
        )


@dataclass(frozen=True)
class ViewTransform:
    """The concrete draw behind one view."""

    enabled: frozenset
    matrix: np.ndarray
    offset: np.ndarray
    pos_noise: np.ndarray | None = field(default=None, repr=False)
    color_noise: np.ndarray | None = field(default=None, repr=False)


def rotation_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def sample_transform(n: int, policy: AugmentPolicy, rng: np.random.Generator) -> ViewTransform:
    on = rng.random(len(FAMILIES)) < policy.family_prob
    if not on.any():
        on[rng.integers(len(FAMILIES))] = True
    enabled = frozenset(f for f, flag in zip(FAMILIES, on) if flag)

    m = np.eye(3)
    if "scale" in enabled:
        m = rng.uniform(*policy.scale_range) * m
    if "flip" in enabled:
        flips = np.where(rng.random(2) < np.asarray(policy.flip_prob), -1.0, 1.0)
        m = np.diag([flips[0], flips[1], 1.0]) @ m
    if "rotation" in enabled:
        m = rotation_z(rng.uniform(*policy.rotation)) @ m
    if "affine" in enabled:
        shear = np.eye(3) + rng.uniform(-1, 1, size=(3, 3)) * policy.affine_shear_range * (1 - np.eye(3))
        m = shear @ m
    offset = np.zeros(3)
    if "offset" in enabled:
        offset = rng.uniform(-policy.offset_range, policy.offset_range, size=3)
    pos_noise = color_noise = None
    if "pos_jitter" in enabled and policy.pos_jitter_sigma > 0:
        pos_noise = rng.normal(scale=policy.pos_jitter_sigma, size=(n, 3))
    if "color_jitter" in enabled and policy.color_jitter_sigma > 0:
        color_noise = rng.normal(scale=policy.color_jitter_sigma, size=(n, 3))
    return ViewTransform(enabled, m, offset, pos_noise, color_noise)


def apply_transform(cloud: PointCloud, t: ViewTransform) -> PointCloud:
    centroid = cloud.positions.mean(axis=0)
    # folded translation keeps the identity map bit-exact
    shift = centroid - centroid @ t.matrix.T + t.offset
    pos = cloud.positions @ t.matrix.T + shift
    if t.pos_noise is not None:
        pos = pos + t.pos_noise
    col = cloud.colors
    if t.color_noise is not None:
        col = np.clip(col + t.color_noise, 0.0, 1.0)
    return cloud.with_geometry(pos, col)


def sample_view(cloud: PointCloud, policy: AugmentPolicy) -> PointCloud:
    rng = np.random.default_rng(policy.seed)
    return apply_transform(cloud, sample_transform(cloud.n, policy, rng))


def make_view_pair(cloud: PointCloud, policy: AugmentPolicy, seed_a: int, seed_b: int,
                   policy_b: AugmentPolicy | None = None) -> tuple[PointCloud, PointCloud]:
    """Two independent views; ``policy_b`` defaults to ``policy``."""
    if seed_a == seed_b:
        raise ValueError("view seeds must differ")
    view_a = sample_view(cloud, replace(policy, seed=seed_a))
    view_b = sample_view(cloud, replace(policy_b or policy, seed=seed_b))
    return view_a, view_b
