from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from fuelmap.classes import NUM_CLASSES, UNLABELED
from fuelmap.metrics import ConfusionMatrix, iou
from fuelmap.net import SegModel, ema_update, save_checkpoint, softmax
from fuelmap.raster import LabelRaster, MultiSpectralImage
from fuelmap.selftrain.augment import Transform
from fuelmap.selftrain.config import TrainConfig
from fuelmap.selftrain.loss import seg_loss_terms
from fuelmap.selftrain.optim import AdamState, lr_at, optimizer_step
from fuelmap.selftrain.targets import class_weights_from_frequencies, mix_arrays, pseudo_from_probs

log = logging.getLogger(__name__)

LOG_FIELDS = ("iter", "lr", "loss_scribble", "loss_points", "pseudo_ratio", "val_miou")


@dataclass
class Sample:
    """One training or validation scene."""

    image: MultiSpectralImage
    scribbles: LabelRaster
    points: LabelRaster | None = None
    dense: LabelRaster | None = None
    name: str = ""


def predict_labels(model: SegModel, image: np.ndarray) -> np.ndarray:
    logits, _ = model.forward_nhwc(image.transpose(1, 2, 0)[None])
    return logits[0].argmax(axis=-1).astype(np.uint8)


def validate(model: SegModel, samples: Sequence[Sample]) -> float:
    cm = ConfusionMatrix()
    for s in samples:
        if s.dense is not None:
            cm.accumulate(predict_labels(model, s.image.bands), s.dense)
    if cm.total == 0:
        return float("nan")
    return iou(cm)[1] * 100.0


def _crop(sample: Sample, size: int, rng: np.random.Generator):
    h, w = sample.image.shape
    size_h, size_w = min(size, h), min(size, w)
    r = int(rng.integers(h - size_h + 1))
    c = int(rng.integers(w - size_w + 1))
    sl = np.s_[r : r + size_h, c : c + size_w]
    points = sample.points
    pts = np.full((size_h, size_w), UNLABELED, np.uint8) if points is None else points.classes[sl]
    sc = np.zeros((size_h, size_w), bool)
    if points is not None and points.superclass is not None:
        sc = points.superclass[sl]
    return sample.image.bands[:, sl[0], sl[1]], sample.scribbles.classes[sl], pts, sc


def train(
    samples: Sequence[Sample],
    cfg: TrainConfig,
    val_samples: Sequence[Sample] = (),
    out_dir=None,
) -> tuple[SegModel, SegModel, list[dict]]:
    """
    Teacher-student training on scribbles and points.

    Every iteration: draw a batch of random crops, let the EMA teacher label
    the clean crops, apply one random transform per crop to image, scribbles,
    points and pseudo-labels alike, fuse scribbles over the pseudo-labels,
    take an AdamW step on the student and refresh the teacher.

    With ``cfg.self_training`` off the student sees scribbles and points only.
    Returns ``(student, teacher, log_rows)``; with ``out_dir`` the log is written
    as ``train_log.csv`` and both models as checkpoints.
    """
    if not samples:
        raise ValueError("empty training set")
    in_bands = samples[0].image.bands.shape[0]
    student = SegModel.init(in_bands=in_bands, widths=cfg.widths, seed=cfg.seed)
    teacher = student.copy()
    rng = np.random.default_rng(cfg.seed)
    if cfg.class_weights is None:
        class_weights = class_weights_from_frequencies(s.scribbles for s in samples)
    else:
        class_weights = np.asarray(cfg.class_weights, dtype=np.float64)
    state = AdamState()
    rows: list[dict] = []

    for it in range(cfg.total_iters):
        picks = rng.integers(len(samples), size=cfg.batch_size)
        crops = [_crop(samples[i], cfg.tile_size, rng) for i in picks]
        clean = np.stack([c[0] for c in crops])

        if cfg.self_training:
            t_logits, _ = teacher.forward_nhwc(clean.transpose(0, 2, 3, 1))
            t_probs = softmax(t_logits.astype(np.float64), axis=-1)
            pseudo, _ = pseudo_from_probs(np.moveaxis(t_probs, -1, -3), cfg.tau)
        else:
            pseudo = np.full((len(crops),) + clean.shape[2:], UNLABELED, np.uint8)

        images, labels, weights, points, supers, ratios = [], [], [], [], [], []
        for k, (img, scr, pts, sc) in enumerate(crops):
            psd = pseudo[k]
            if cfg.augment:
                t = Transform.sample(rng, square=img.shape[1] == img.shape[2], max_shift=cfg.max_shift,
                                     blur_prob=cfg.blur_prob)
                img, scr, pts, psd = t.image(img), t.labels(scr), t.labels(pts), t.labels(psd)
                sc = t.labels(sc, False)
            lab, wts, ratio = mix_arrays(psd, scr)
            images.append(img)
            labels.append(lab)
            weights.append(wts)
            points.append(pts)
            supers.append(sc)
            ratios.append(ratio)

        x = np.stack(images).transpose(0, 2, 3, 1)
        logits, cache = student.forward_nhwc(x)
        ls, lp, grad = seg_loss_terms(
            logits.transpose(0, 3, 1, 2),
            np.stack(labels),
            np.stack(weights),
            np.stack(points),
            class_weights,
            cfg.lam,
            np.stack(supers),
            cfg.weighted_point_loss,
        )
        grads = student.backward_nhwc(cache, grad.transpose(0, 2, 3, 1))
        lr = lr_at(it, cfg)
        optimizer_step(student, grads, state, lr, cfg)
        ema_update(teacher, student, cfg.alpha)

        row = {"iter": it + 1, "lr": lr, "loss_scribble": ls, "loss_points": lp,
               "pseudo_ratio": float(np.mean(ratios)), "val_miou": None}
        last = it + 1 == cfg.total_iters
        if val_samples and cfg.val_interval and ((it + 1) % cfg.val_interval == 0 or last):
            row["val_miou"] = validate(student, val_samples)
            log.info("iter %d  L_S %.4f  L_P %.4f  val mIoU %.2f", it + 1, ls, lp, row["val_miou"])
        rows.append(row)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_log(rows, out_dir / "train_log.csv")
        extra = {"train_config": cfg.to_dict(), "class_weights": [float(w) for w in class_weights]}
        save_checkpoint(student, out_dir / "student", cfg.total_iters, extra)
        save_checkpoint(teacher, out_dir / "teacher", cfg.total_iters, extra)
    return student, teacher, rows


def write_log(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row[k]) for k in LOG_FIELDS})


__all__ = ["Sample", "train", "validate", "predict_labels", "write_log"]
