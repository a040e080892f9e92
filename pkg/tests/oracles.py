"""Independent reference computations used by several test modules."""
import math

import numpy as np

from pointmatch.model import MlpParams


def loop_forward(params: MlpParams, x):
    """Forward pass written with explicit loops over points, no shared code."""
    out = []
    n_layers = len(params.layers)
    for row in x:
        h = list(row)
        for li, (w, b) in enumerate(params.layers):
            z = [sum(w[o, i] * h[i] for i in range(len(h))) + b[o] for o in range(w.shape[0])]
            h = z if li == n_layers - 1 else [max(v, 0.0) for v in z]
        m = max(h)
        e = [math.exp(v - m) for v in h]
        s = sum(e)
        out.append([v / s for v in e])
    return np.array(out)


def objective(params, feats_a, feats_b, labeled, labels, pl_cls, pl_mask, sp_cls, sp_mask, w, lam, fwd):
    """Total loss with frozen targets, from probabilities only."""
    qa = fwd(params, feats_a)
    qb = fwd(params, feats_b)
    n = qb.shape[0]
    l_ce = sum(-math.log(qa[i, y]) for i, y in zip(labeled, labels)) / len(labeled)
    l_pl = sum(-math.log(qb[i, pl_cls[i]]) for i in range(n) if pl_mask[i]) / n
    l_sp = sum(-math.log(qb[i, sp_cls[i]]) for i in range(n) if sp_mask[i]) / n
    return l_ce + lam * (w * l_sp + (1 - w) * l_pl)


def finite_difference(fn, params: MlpParams, h=1e-4):
    """Central differences over every parameter, in flat layer order."""
    base = params.flat()
    grad = np.zeros_like(base)
    for k in range(base.size):
        plus, minus = base.copy(), base.copy()
        plus[k] += h
        minus[k] -= h
        grad[k] = (fn(MlpParams.from_flat(params.dims, plus)) - fn(MlpParams.from_flat(params.dims, minus))) / (2 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    """max_k |a_k - n_k| / max(|a_k|, |n_k|, floor)."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def forward_nocheck(params: MlpParams, x):
    """Vectorized forward kept separate from the library implementation."""
    h = np.asarray(x, dtype=np.float64)
    for li, (w, b) in enumerate(params.layers):
        h = h @ w.T + b
        if li < len(params.layers) - 1:
            h = np.where(h > 0, h, 0.0)
    e = np.exp(h - h.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def scene_objective(params, feats_a, feats_b, weak, pseudo, sp_pseudo, w, lam, fwd):
    """L_total for one scene with the given pseudo-labels held fixed."""
    return objective(params, feats_a, feats_b, weak.labeled_indices, weak.classes,
                     pseudo.classes, pseudo.mask, sp_pseudo.classes, sp_pseudo.mask, w, lam, fwd)
