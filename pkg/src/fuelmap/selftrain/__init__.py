"""Teacher-student self-training with pseudo-label mixing."""

from fuelmap.selftrain.augment import Transform, augment, tta_infer
from fuelmap.selftrain.config import TrainConfig
from fuelmap.selftrain.loss import loss_seg, seg_loss_terms, weighted_ce
from fuelmap.selftrain.optim import AdamState, lr_at, optimizer_step
from fuelmap.selftrain.targets import (
    MixedTarget,
    class_weights_from_frequencies,
    generate_pseudo_labels,
    mix_labels,
)
from fuelmap.selftrain.trainer import Sample, train, validate

__all__ = [
    "AdamState",
    "MixedTarget",
    "Sample",
    "TrainConfig",
    "Transform",
    "augment",
    "class_weights_from_frequencies",
    "generate_pseudo_labels",
    "loss_seg",
    "lr_at",
    "mix_labels",
    "optimizer_step",
    "seg_loss_terms",
    "train",
    "tta_infer",
    "validate",
    "weighted_ce",
]
