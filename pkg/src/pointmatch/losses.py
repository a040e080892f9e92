"""Loss terms of the consistency-training objective.

Predictions on view A supply both pseudo-label sources; view B is trained to
match them. Targets are plain arrays, so nothing upstream of them receives a
gradient.
"""
from __future__ import annotations

import numpy as np

from .core import PseudoLabel, SuperPointPartition, WeakLabels, row_argmax

LOG_FLOOR = 1e-12


def _nll(q: np.ndarray, rows, cols) -> np.ndarray:
    return -np.log(np.maximum(q[rows, cols], LOG_FLOOR))


def ce_loss(q: np.ndarray, weak: WeakLabels) -> float:
    """Mean cross-entropy over the labeled points."""
    if len(weak) == 0:
        raise ValueError("supervised loss needs at least one labeled point")
    return float(_nll(q, weak.labeled_indices, weak.classes).mean())


def confidence_mask(qa: np.ndarray, tau: float) -> np.ndarray:
    return np.asarray(qa).max(axis=1) >= tau


def pointwise_pseudolabel(qa: np.ndarray, tau: float) -> PseudoLabel:
    classes, conf = row_argmax(qa)
    return PseudoLabel(classes, conf >= tau, conf)


def superpoint_pseudolabel(qa: np.ndarray, part: SuperPointPartition, tau_sp: float) -> PseudoLabel:
    """Average the rows of each super-point, take its argmax, and broadcast.

    The mask bit is the group's averaged confidence against ``tau_sp``, shared
    by every member of the group.
    """
    qa = np.asarray(qa, dtype=np.float64)
    if part.group_of.size != qa.shape[0]:
        raise ValueError("partition does not cover the prediction rows")
    sums = np.zeros((part.num_groups, qa.shape[1]))
    np.add.at(sums, part.group_of, qa)
    mean = sums / part.sizes[:, None]
    group_cls, group_conf = row_argmax(mean)
    conf = group_conf[part.group_of]
    return PseudoLabel(group_cls[part.group_of], conf >= tau_sp, conf)


def pl_loss(qb: np.ndarray, pseudo: PseudoLabel) -> float:
    """Masked cross-entropy normalized by the total point count N (not by the mask sum)."""
    n = qb.shape[0]
    if pseudo.classes.size != n:
        raise ValueError("pseudo-label length differs from prediction rows")
    per_point = _nll(qb, np.arange(n), pseudo.classes)
    return float(np.where(pseudo.mask, per_point, 0.0).sum() / n)


sp_pl_loss = pl_loss


def adaptive_weight(k: int, alpha: float = 1.0, divisor: int = 32) -> float:
    """Inverse decay ``alpha / floor(k / divisor)``, held at 1 while the floor is 0."""
    if k < 0:
        raise ValueError("epoch index must be >= 0")
    e = k // divisor
    if e < 1:
        return 1.0
    return min(1.0, alpha / e)


def combined_pl_loss(l_pl: float, l_pl_sp: float, w: float) -> float:
    """``w * l_pl_sp + (1 - w) * l_pl``.

    Written as ``l_pl + w * (l_pl_sp - l_pl)`` so that equal inputs give the
    same bits for every ``w``.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must be in [0, 1]")
    if w == 1.0:
        return l_pl_sp
    if w == 0.0:
        return l_pl
    return l_pl + w * (l_pl_sp - l_pl)


def total_loss(l_ce: float, l_pl_prime: float, lambda_: float) -> float:
    return l_ce + lambda_ * l_pl_prime


# ---------------------------------------------------------------------------
# soft targets whose fused softmax-CE gradient reproduces the losses above

def ce_targets(weak: WeakLabels, c: int) -> np.ndarray:
    t = np.zeros((weak.n, c))
    t[weak.labeled_indices, weak.classes] = 1.0 / len(weak)
    return t


def pseudo_targets(pseudo: PseudoLabel, c: int) -> np.ndarray:
    n = pseudo.classes.size
    t = np.zeros((n, c))
    t[np.arange(n), pseudo.classes] = pseudo.mask.astype(np.float64)
    return t


def combined_targets(pseudo: PseudoLabel, sp_pseudo: PseudoLabel, w: float, lambda_: float, c: int) -> np.ndarray:
    """Targets for view B: ``lambda / N * (w * T_sp + (1 - w) * T_pl)``, same branch structure as the loss."""
    n = pseudo.classes.size
    t_pl = pseudo_targets(pseudo, c)
    t_sp = pseudo_targets(sp_pseudo, c)
    if w == 1.0:
        t = t_sp
    elif w == 0.0:
        t = t_pl
    else:
        t = t_pl + w * (t_sp - t_pl)
    return t * (lambda_ / n)
