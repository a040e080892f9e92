"""Per-point MLP classifier with hand-derived gradients.

Each point is described by 13 local-context features (see
:func:`extract_features`) and classified by an F -> H -> H -> C ReLU network
ending in a row-wise softmax. Everything runs in float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud, check_prob_matrix

FEATURE_DIM = 13


def extract_features(view: PointCloud, k_feat: int = 16) -> np.ndarray:
    """N x 13 features: centered xyz, rgb, neighborhood mean offset, neighborhood mean rgb, size.

    Neighborhoods are the ``k_feat`` nearest points including the point itself
    (all points when N < k_feat); the size column is ``min(N, k_feat) / k_feat``.
    """
    pos, col = view.positions, view.colors
    n = view.n
    k = min(k_feat, n)
    if k == 1:
        nbr = np.arange(n)[:, None]
    else:
        _, nbr = cKDTree(pos).query(pos, k=k)
    feats = np.empty((n, FEATURE_DIM))
    feats[:, 0:3] = pos - pos.mean(axis=0)
    feats[:, 3:6] = col
    feats[:, 6:9] = pos[nbr].mean(axis=1) - pos
    feats[:, 9:12] = col[nbr].mean(axis=1)
    feats[:, 12] = k / k_feat
    return feats


@dataclass
class MlpParams:
    """Layer list of ``(W, b)`` with W shaped out x in."""

    layers: list

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[1],) + tuple(w.shape[0] for w, _ in self.layers)

    def copy(self) -> MlpParams:
        return MlpParams([(w.copy(), b.copy()) for w, b in self.layers])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in self.layers])

    @classmethod
    def from_flat(cls, dims, values) -> MlpParams:
        values = np.asarray(values, dtype=np.float64)
        layers, pos = [], 0
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = values[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in).copy()
            pos += fan_in * fan_out
            b = values[pos:pos + fan_out].copy()
            pos += fan_out
            layers.append((w, b))
        if pos != values.size:
            raise ValueError(f"expected {pos} parameters for dims {dims}, got {values.size}")
        return cls(layers)

    @classmethod
    def init(cls, dims, rng: np.random.Generator) -> MlpParams:
        """He-normal weights, zero biases."""
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = rng.normal(scale=np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
            layers.append((w, np.zeros(fan_out)))
        return cls(layers)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: MlpParams, features: np.ndarray, return_cache: bool = False):
    """Class probabilities for every row of ``features``."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims[0]:
        raise ValueError(f"features shape {x.shape} does not match input dim {params.dims[0]}")
    for w, b in params.layers:
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("non-finite parameter")
    acts = [x]
    h = x
    last = len(params.layers) - 1
    for li, (w, b) in enumerate(params.layers):
        z = h @ w.T + b
        h = z if li == last else np.maximum(z, 0.0)
        acts.append(h)
    q = check_prob_matrix(softmax(h))
    if return_cache:
        return q, acts
    return q


def backward(params: MlpParams, acts, dlogits: np.ndarray) -> list:
    """Reverse pass from a gradient on the final logits.

    ``acts`` is the cache returned by ``forward(..., return_cache=True)``.
    Returns ``[(dW, db), ...]`` aligned with ``params.layers``.
    """
    grads = [None] * len(params.layers)
    g = dlogits
    for li in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[li]
        h_in = acts[li]
        grads[li] = (g.T @ h_in, g.sum(axis=0))
        if li > 0:
            g = (g @ w) * (acts[li] > 0)
    return grads


def soft_target_logit_grad(q: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient on logits of ``-sum(targets * log softmax(logits))``.

    Softmax and cross-entropy are fused: d/dz = rowsum(T) * q - T.
    """
    return targets.sum(axis=1, keepdims=True) * q - targets


def add_grads(a, b):
    return [(wa + wb, ba + bb) for (wa, ba), (wb, bb) in zip(a, b)]


def scale_grads(g, s):
    return [(w * s, b * s) for w, b in g]


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> AdamState:
        zeros = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]
        return cls(zeros, [(w.copy(), b.copy()) for w, b in zeros], 0)


def adam_step(params: MlpParams, grads, state: AdamState, lr: float = 0.01,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_layers, new_m, new_v = [], [], []
    for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(params.layers, grads, state.m, state.v):
        pair_p, pair_m, pair_v = [], [], []
        for p, g, m, v in ((w, gw, mw, vw), (b, gb, mb, vb)):
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * (g * g)
            p = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
            pair_p.append(p)
            pair_m.append(m)
            pair_v.append(v)
        new_layers.append(tuple(pair_p))
        new_m.append(tuple(pair_m))
        new_v.append(tuple(pair_v))
    return MlpParams(new_layers), AdamState(new_m, new_v, t)


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"pointmatch-ckpt v1"


def save_checkpoint(path, params: MlpParams) -> None:
    """Header line, dims line, then little-endian float64 values layer by layer (W row-major, b)."""
    dims = " ".join(map(str, params.dims))
    payload = params.flat().astype("<f8").tobytes()
    Path(path).write_bytes(CKPT_MAGIC + b"\n" + f"dims {dims}\n".encode() + payload)


def load_checkpoint(path) -> MlpParams:
    raw = Path(path).read_bytes()
    first, rest = raw.split(b"\n", 1)
    if first != CKPT_MAGIC:
        raise ValueError(f"{path}: not a pointmatch checkpoint")
    dims_line, payload = rest.split(b"\n", 1)
    parts = dims_line.decode().split()
    if parts[0] != "dims":
        raise ValueError(f"{path}: missing dims line")
    dims = tuple(int(d) for d in parts[1:])
    return MlpParams.from_flat(dims, np.frombuffer(payload, dtype="<f8"))
