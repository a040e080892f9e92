"""Weakly supervised point-cloud segmentation with two-view pseudo-label consistency
and super-point vote correction, on a small numpy MLP."""

from .augment import AugmentPolicy, make_view_pair, sample_view
from .core import PointCloud, PseudoLabel, Scene, SuperPointPartition, WeakLabels
from .losses import (
    adaptive_weight,
    ce_loss,
    combined_pl_loss,
    confidence_mask,
    pl_loss,
    pointwise_pseudolabel,
    sp_pl_loss,
    superpoint_pseudolabel,
    total_loss,
)
from .metrics import IoUReport, confusion_matrix, miou, pseudolabel_accuracy
from .model import MlpParams, backward, extract_features, forward
from .superpoint import ClusterConfig, build_superpoints, partition_purity
from .synth import DatasetSpec, SceneSpec, WeakScheme, generate_dataset, generate_scene, sample_weak_labels
from .trainer import Ablation, TrainConfig, TrainItem, run_training, train_epoch

__version__ = "0.1.0"
