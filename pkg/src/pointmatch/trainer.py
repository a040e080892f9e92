"""Two-view consistency training loop.

Per scene and step: augment two views, predict both, build the point-wise
and super-point pseudo-labels from view A, supervise view A with the weak
labels and view B with the blended pseudo-labels, then take one Adam step
per batch of scenes.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import seeds
from .augment import AugmentPolicy, make_view_pair
from .core import PointCloud, PseudoLabel, SuperPointPartition, WeakLabels
from .losses import (
    adaptive_weight,
    ce_loss,
    ce_targets,
    combined_pl_loss,
    combined_targets,
    pl_loss,
    pointwise_pseudolabel,
    sp_pl_loss,
    superpoint_pseudolabel,
    total_loss,
)
from .metrics import IoUReport, confusion_matrix, miou
from .model import (
    FEATURE_DIM,
    AdamState,
    MlpParams,
    adam_step,
    add_grads,
    backward,
    extract_features,
    forward,
    save_checkpoint,
    scale_grads,
    soft_target_logit_grad,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Ablation:
    kind: str = "full"
    value: float | None = None

    KINDS = ("full", "no-consistency", "fixed-w", "fast-decay")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown ablation {self.kind!r}")
        if self.kind == "fixed-w" and not (self.value is not None and 0.0 <= self.value <= 1.0):
            raise ValueError("fixed-w needs a value in [0, 1]")
        if self.kind == "fast-decay" and not (self.value is not None and int(self.value) == self.value >= 1):
            raise ValueError("fast-decay needs an integer divisor >= 1")

    @classmethod
    def parse(cls, text: str) -> Ablation:
        kind, _, arg = text.partition(":")
        if kind in ("full", "no-consistency"):
            if arg:
                raise ValueError(f"{kind} takes no argument")
            return cls(kind)
        if not arg:
            raise ValueError(f"{kind} needs an argument")
        return cls(kind, float(arg) if kind == "fixed-w" else int(arg))

    def __str__(self):
        return self.kind if self.value is None else f"{self.kind}:{self.value:g}"


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.95
    tau_sp: float = 0.95
    lambda_: float = 1.0
    alpha: float = 1.0
    epoch_divisor: int = 32
    epochs: int = 128
    lr: float = 0.01
    batch_size: int = 4
    seed: int = 0
    ablation: Ablation = field(default_factory=Ablation)
    hidden: int = 64
    k_feat: int = 16
    strength_a: float = 1.0
    strength_b: float = 2.0
    eval_every: int = 1

    def __post_init__(self):
        if not (0 < self.tau <= 1 and 0 < self.tau_sp <= 1):
            raise ValueError("tau and tau_sp must be in (0, 1]")
        if self.lambda_ < 0:
            raise ValueError("lambda_ must be >= 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.epoch_divisor < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("epoch_divisor and batch_size must be >= 1, epochs >= 0")
        if isinstance(self.ablation, str):
            object.__setattr__(self, "ablation", Ablation.parse(self.ablation))

    @property
    def consistency(self) -> bool:
        return self.ablation.kind != "no-consistency" and self.lambda_ > 0

    def weight_at(self, k: int) -> float:
        ab = self.ablation
        if ab.kind == "fixed-w":
            return float(ab.value)
        divisor = int(ab.value) if ab.kind == "fast-decay" else self.epoch_divisor
        return adaptive_weight(k, self.alpha, divisor)


@dataclass(frozen=True)
class TrainItem:
    """A training scene: cloud, its sparse labels, and its (clean-cloud) super-points."""

    cloud: PointCloud
    weak: WeakLabels
    partition: SuperPointPartition


@dataclass
class TrainState:
    params: MlpParams
    adam: AdamState
    epoch: int = 0

    @classmethod
    def init(cls, config: TrainConfig, num_classes: int) -> TrainState:
        dims = (FEATURE_DIM, config.hidden, config.hidden, num_classes)
        params = MlpParams.init(dims, seeds.stream(config.seed, "init"))
        return cls(params, AdamState.zeros_like(params), 0)


@dataclass
class EpochMetrics:
    epoch: int
    w: float
    l_ce: float
    l_pl: float
    l_pl_sp: float
    l_total: float
    mask_rate: float
    sp_mask_rate: float
    pl_accuracy: float | None
    sp_pl_accuracy: float | None
    pl_accuracy_all: float
    sp_pl_accuracy_all: float
    val_miou: float | None = None


METRIC_FIELDS = [f.name for f in fields(EpochMetrics)]


def view_seeds(root: int, epoch: int, scene: int) -> tuple[int, int]:
    a = seeds.derive_seed(root, "augment-A", epoch, scene)
    b = seeds.derive_seed(root, "augment-B", epoch, scene)
    return a, (b if b != a else b ^ 1)


def epoch_order(root: int, epoch: int, n: int) -> np.ndarray:
    return seeds.stream(root, "shuffle", epoch).permutation(n)


def predict(params: MlpParams, cloud: PointCloud, k_feat: int) -> np.ndarray:
    """Hard labels from one un-augmented pass; super-points are not involved."""
    return forward(params, extract_features(cloud, k_feat)).argmax(axis=1)


def evaluate_predictor(predict_fn, clouds, num_classes: int) -> IoUReport:
    """Sum per-scene confusion matrices for ``predict_fn(cloud) -> labels``."""
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    for cloud in clouds:
        if cloud.gt_labels is None:
            raise ValueError("evaluation needs ground-truth labels")
        if cloud.num_classes != num_classes:
            raise ValueError(f"scene has {cloud.num_classes} classes, model predicts {num_classes}")
        conf += confusion_matrix(predict_fn(cloud), cloud.gt_labels, num_classes)
    return miou(conf)


def evaluate(params: MlpParams, clouds, k_feat: int) -> IoUReport:
    return evaluate_predictor(lambda cloud: predict(params, cloud, k_feat), clouds, params.dims[-1])


@dataclass
class SceneStep:
    l_ce: float
    l_pl: float
    l_pl_sp: float
    l_total: float
    grads: list
    pseudo: PseudoLabel
    sp_pseudo: PseudoLabel


def scene_step(params: MlpParams, feats_a, feats_b, weak: WeakLabels, partition: SuperPointPartition,
               tau: float, tau_sp: float, w: float, lambda_: float) -> SceneStep:
    """Losses and parameter gradients of L_ce + lambda * L'_pl for one scene.

    Pseudo-labels come from view A and are constants for differentiation.
    ``feats_b=None`` drops the consistency branch (pseudo-labels are still
    built for diagnostics).
    """
    c = params.dims[-1]
    qa, acts_a = forward(params, feats_a, return_cache=True)
    l_ce = ce_loss(qa, weak)
    grads = backward(params, acts_a, soft_target_logit_grad(qa, ce_targets(weak, c)))
    pseudo = pointwise_pseudolabel(qa, tau)
    sp_pseudo = superpoint_pseudolabel(qa, partition, tau_sp)
    if feats_b is None:
        return SceneStep(l_ce, 0.0, 0.0, l_ce, grads, pseudo, sp_pseudo)
    qb, acts_b = forward(params, feats_b, return_cache=True)
    l_pl = pl_loss(qb, pseudo)
    l_sp = sp_pl_loss(qb, sp_pseudo)
    l_tot = total_loss(l_ce, combined_pl_loss(l_pl, l_sp, w), lambda_)
    targets_b = combined_targets(pseudo, sp_pseudo, w, lambda_, c)
    grads = add_grads(grads, backward(params, acts_b, soft_target_logit_grad(qb, targets_b)))
    return SceneStep(l_ce, l_pl, l_sp, l_tot, grads, pseudo, sp_pseudo)


def train_epoch(state: TrainState, items, config: TrainConfig, val=None) -> EpochMetrics:
    """Run one epoch in place on ``state`` and return its aggregated metrics."""
    k = state.epoch
    w = config.weight_at(k)
    lam = config.lambda_
    policy_a = AugmentPolicy().scaled(config.strength_a)
    policy_b = AugmentPolicy().scaled(config.strength_b)

    sums = dict(l_ce=0.0, l_pl=0.0, l_pl_sp=0.0, l_total=0.0)
    n_scenes = 0
    counts = dict(points=0, mask=0, sp_mask=0, pl_hit=0, sp_hit=0, pl_hit_all=0, sp_hit_all=0)

    order = epoch_order(config.seed, k, len(items))
    for start in range(0, len(order), config.batch_size):
        batch_grad = None
        n_in_batch = 0
        for s in order[start:start + config.batch_size]:
            item = items[s]
            if len(item.weak) == 0:
                log.warning("epoch %d: scene %d has no labeled points, skipped", k, s)
                continue
            seed_a, seed_b = view_seeds(config.seed, k, int(s))
            view_a, view_b = make_view_pair(item.cloud, policy_a, seed_a, seed_b, policy_b)

            feats_a = extract_features(view_a, config.k_feat)
            feats_b = extract_features(view_b, config.k_feat) if config.consistency else None
            step = scene_step(state.params, feats_a, feats_b, item.weak, item.partition,
                              config.tau, config.tau_sp, w, lam)
            grad, pseudo, sp_pseudo = step.grads, step.pseudo, step.sp_pseudo
            l_ce, l_pl, l_sp, l_tot = step.l_ce, step.l_pl, step.l_pl_sp, step.l_total

            batch_grad = grad if batch_grad is None else add_grads(batch_grad, grad)
            n_in_batch += 1

            sums["l_ce"] += l_ce
            sums["l_pl"] += l_pl
            sums["l_pl_sp"] += l_sp
            sums["l_total"] += l_tot
            n_scenes += 1
            gt = item.cloud.gt_labels
            counts["points"] += item.cloud.n
            counts["mask"] += int(pseudo.mask.sum())
            counts["sp_mask"] += int(sp_pseudo.mask.sum())
            if gt is not None:
                pl_hit = pseudo.classes == gt
                sp_hit = sp_pseudo.classes == gt
                counts["pl_hit"] += int(pl_hit[pseudo.mask].sum())
                counts["sp_hit"] += int(sp_hit[sp_pseudo.mask].sum())
                counts["pl_hit_all"] += int(pl_hit.sum())
                counts["sp_hit_all"] += int(sp_hit.sum())

        if n_in_batch:
            batch_grad = scale_grads(batch_grad, 1.0 / n_in_batch)
            state.params, state.adam = adam_step(state.params, batch_grad, state.adam, lr=config.lr)

    state.epoch += 1
    denom = max(n_scenes, 1)
    pts = max(counts["points"], 1)
    metrics = EpochMetrics(
        epoch=k,
        w=w,
        l_ce=sums["l_ce"] / denom,
        l_pl=sums["l_pl"] / denom,
        l_pl_sp=sums["l_pl_sp"] / denom,
        l_total=sums["l_total"] / denom,
        mask_rate=counts["mask"] / pts,
        sp_mask_rate=counts["sp_mask"] / pts,
        pl_accuracy=counts["pl_hit"] / counts["mask"] if counts["mask"] else None,
        sp_pl_accuracy=counts["sp_hit"] / counts["sp_mask"] if counts["sp_mask"] else None,
        pl_accuracy_all=counts["pl_hit_all"] / pts,
        sp_pl_accuracy_all=counts["sp_hit_all"] / pts,
    )
    if val and config.eval_every and (k + 1) % config.eval_every == 0:
        metrics.val_miou = evaluate(state.params, val, config.k_feat).miou
    return metrics


def run_training(config: TrainConfig, items, val=None, out_dir=None, checkpoint_every: int = 0):
    """Train for ``config.epochs`` epochs; returns ``(params, history)``.

    With ``out_dir`` the metrics CSV (rewritten after every epoch), the final
    checkpoint, and optional periodic checkpoints are written there.
    """
    if not items:
        raise ValueError("no training scenes")
    num_classes = items[0].cloud.num_classes
    state = TrainState.init(config, num_classes)
    history: list[EpochMetrics] = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for _ in range(config.epochs):
        m = train_epoch(state, items, config, val)
        history.append(m)
        log.info("epoch %d w=%.3f total=%.4f mask=%.3f val_miou=%s",
                 m.epoch, m.w, m.l_total, m.mask_rate, m.val_miou)
        if out is not None and checkpoint_every and (m.epoch + 1) % checkpoint_every == 0:
            save_checkpoint(out / f"checkpoint_{m.epoch:04d}.ckpt", state.params)
    if out is not None:
        write_metrics_csv(out / "metrics.csv", history)
        save_checkpoint(out / "checkpoint.ckpt", state.params)
    return state.params, history


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_metrics_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_FIELDS)
        for m in history:
            writer.writerow([_fmt(getattr(m, f)) for f in METRIC_FIELDS])


def read_metrics_csv(path) -> list[EpochMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for f in METRIC_FIELDS:
                raw = row[f]
                if f == "epoch":
                    vals[f] = int(raw)
                else:
                    vals[f] = float(raw) if raw != "" else None
            out.append(EpochMetrics(**vals))
    return out


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["ablation"] = str(config.ablation)
    return d


def with_ablation(config: TrainConfig, ablation: Ablation | str) -> TrainConfig:
    if isinstance(ablation, str):
        ablation = Ablation.parse(ablation)
    return replace(config, ablation=ablation)


@dataclass(frozen=True)
class PurityReport:
    """Early-epoch comparison of super-point vs point-wise masked accuracy."""

    epochs: tuple[int, ...]
    rows: tuple[tuple[int, float | None, float | None], ...]
    compared: int
    sp_wins: int

    @property
    def fraction(self) -> float | None:
        return self.sp_wins / self.compared if self.compared else None

    def table(self) -> str:
        lines = ["epoch\tpl_masked_acc\tsp_masked_acc\tsp>=pl"]
        for k, pl, sp in self.rows:
            both = pl is not None and sp is not None
            lines.append(f"{k}\t{_cell(pl)}\t{_cell(sp)}\t{('yes' if sp >= pl else 'no') if both else '-'}")
        frac = "-" if self.fraction is None else f"{self.fraction:.3f}"
        lines.append(f"sp>=pl in {self.sp_wins}/{self.compared} comparable epochs ({frac})")
        return "\n".join(lines) + "\n"


def _cell(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def early_purity(history, fraction: float = 0.25) -> PurityReport:
    """Look at the first ``fraction`` of epochs (at least one).

    Epochs where either masked accuracy is undefined (empty mask) are listed
    but not counted.
    """
    head = list(history)[: max(1, int(len(history) * fraction))]
    rows = tuple((m.epoch, m.pl_accuracy, m.sp_pl_accuracy) for m in head)
    both = [(pl, sp) for _, pl, sp in rows if pl is not None and sp is not None]
    return PurityReport(tuple(r[0] for r in rows), rows, len(both), sum(sp >= pl for pl, sp in both))
