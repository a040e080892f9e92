"""Segmentation metrics and pseudo-label diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PseudoLabel


@dataclass(frozen=True)
class IoUReport:
    per_class_iou: dict  # class -> IoU, or None when the class never occurs
    miou: float
    confusion: np.ndarray

    def table(self) -> str:
        rows = ["class\tIoU\tgt_points\tpred_points"]
        gt = self.confusion.sum(axis=1)
        pred = self.confusion.sum(axis=0)
        for c, iou in self.per_class_iou.items():
            val = "-" if iou is None else f"{iou:.4f}"
            rows.append(f"{c}\t{val}\t{int(gt[c])}\t{int(pred[c])}")
        rows.append(f"mIoU\t{self.miou:.4f}\t{int(gt.sum())}\t{int(pred.sum())}")
        return "\n".join(rows) + "\n"


def confusion_matrix(pred, gt, c: int) -> np.ndarray:
    """Counts with rows indexed by ground truth and columns by prediction."""
    pred = np.asarray(pred, dtype=np.int64).ravel()
    gt = np.asarray(gt, dtype=np.int64).ravel()
    if pred.shape != gt.shape:
        raise ValueError(f"prediction length {pred.size} != ground-truth length {gt.size}")
    if pred.size and (min(pred.min(), gt.min()) < 0 or max(pred.max(), gt.max()) >= c):
        raise ValueError(f"class index outside [0, {c})")
    return np.bincount(gt * c + pred, minlength=c * c).reshape(c, c)


def miou(conf: np.ndarray) -> IoUReport:
    """Mean IoU over classes that appear in either ground truth or prediction."""
    conf = np.asarray(conf)
    tp = np.diag(conf).astype(np.float64)
    union = conf.sum(axis=0) + conf.sum(axis=1) - tp
    per_class = {c: (float(tp[c] / union[c]) if union[c] > 0 else None) for c in range(conf.shape[0])}
    defined = [v for v in per_class.values() if v is not None]
    if not defined:
        raise ValueError("no class occurs in ground truth or predictions")
    return IoUReport(per_class, float(np.mean(defined)), conf)


def pseudolabel_accuracy(pseudo: PseudoLabel, gt) -> tuple[float | None, float, float]:
    """(accuracy on masked-in points or None, accuracy on all points, mask rate)."""
    gt = np.asarray(gt)
    if gt.shape != pseudo.classes.shape:
        raise ValueError("ground truth and pseudo-label lengths differ")
    hit = pseudo.classes == gt
    masked = float(hit[pseudo.mask].mean()) if pseudo.mask.any() else None
    return masked, float(hit.mean()), pseudo.mask_rate
