"""Pseudo-labels, label mixing and class weighting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from fuelmap.classes import IGNORED, NUM_CLASSES, UNLABELED
from fuelmap.errors import ShapeMismatchError
from fuelmap.net import SegModel, predict_proba
from fuelmap.raster import LabelRaster, WeightMap


@dataclass(frozen=True)
class MixedTarget:
    labels: LabelRaster
    weights: WeightMap
    # |pseudo pixels above tau| / |pixels|, before the scribbles were fused in
    pseudo_ratio: float = 0.0


def pseudo_from_probs(probs: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Threshold a (..., C, H, W) probability array into u8 labels and confidences."""
    conf = probs.max(axis=-3)
    labels = probs.argmax(axis=-3).astype(np.uint8)
    labels[conf < tau] = UNLABELED
    return labels, conf


def generate_pseudo_labels(teacher: SegModel, image, tau: float) -> tuple[LabelRaster, np.ndarray]:
    """Teacher argmax where its softmax confidence reaches ``tau``, UNLABELED elsewhere."""
    probs = predict_proba(teacher, image)
    labels, conf = pseudo_from_probs(probs, tau)
    return LabelRaster(labels), conf


def mix_arrays(pseudo: np.ndarray, scribble: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    if pseudo.shape != scribble.shape:
        raise ShapeMismatchError(f"pseudo {pseudo.shape} vs scribble {scribble.shape}")
    has_pseudo = pseudo != UNLABELED
    ratio = float(has_pseudo.sum()) / pseudo.size if pseudo.size else 0.0
    labels = pseudo.copy()
    weights = np.where(has_pseudo & (pseudo != IGNORED), ratio, 0.0)
    has_scribble = scribble != UNLABELED
    labels[has_scribble] = scribble[has_scribble]
    weights[has_scribble] = np.where(scribble[has_scribble] == IGNORED, 0.0, 1.0)
    return labels, weights, ratio


def mix_labels(pseudo: LabelRaster, scribble: LabelRaster) -> MixedTarget:
    """
    Fuse scribbles on top of confidence-filtered pseudo-labels.

    Scribble pixels carry weight 1 (0 for Ignored); surviving pseudo pixels carry
    the tile's pseudo-label coverage |I_hat| / |I|.
    """
    labels, weights, ratio = mix_arrays(pseudo.classes, scribble.classes)
    return MixedTarget(LabelRaster(labels), WeightMap(weights), ratio)


def class_weights_from_frequencies(scribbles: Iterable, floor: float = 1e-4) -> np.ndarray:
    """
    Inverse-frequency class weights, mean 1 over the classes that occur.

    Absent classes and Ignored get weight 0. ``floor`` caps the weight of very
    rare classes (as a fraction of all labeled pixels).
    """
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    for s in scribbles:
        arr = s.classes if isinstance(s, LabelRaster) else np.asarray(s)
        counts += np.bincount(arr[arr < NUM_CLASSES].ravel(), minlength=NUM_CLASSES)[:NUM_CLASSES]
    total = counts.sum()
    if total == 0:
        raise ValueError("no labeled pixels to derive class weights from")
    freq = counts / total
    present = counts > 0
    inv = np.zeros(NUM_CLASSES)
    inv[present] = 1.0 / np.maximum(freq[present], floor)
    inv[present] /= inv[present].mean()
    return np.append(inv, 0.0)
