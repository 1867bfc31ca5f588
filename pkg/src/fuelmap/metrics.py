"""Confusion-matrix metrics against sparse ground truth (F1 on points, IoU on dense labels)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fuelmap.classes import CLASS_NAMES, FOREST, NUM_CLASSES
from fuelmap.errors import ShapeMismatchError
from fuelmap.raster import LabelRaster, read_raster


@dataclass
class ConfusionMatrix:
    """Rows are ground truth, columns predictions, over the 9 trainable classes."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64))

    def accumulate(self, pred, gt, superclass=None) -> "ConfusionMatrix":
        """
        Add every pixel where ``gt`` holds a trainable class.

        Pixels flagged in ``superclass`` (forest points) count as correct when the
        prediction is either forest class, and are then booked on the predicted
        class's diagonal.
        """
        if isinstance(gt, LabelRaster):
            superclass = gt.superclass if superclass is None else superclass
            gt = gt.classes
        pred = pred.classes if isinstance(pred, LabelRaster) else np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")
        keep = gt < NUM_CLASSES
        g = gt[keep].astype(np.int64)
        p = pred[keep].astype(np.int64)
        if p.size and (p.min() < 0 or p.max() >= NUM_CLASSES):
            raise ValueError("predictions must be trainable class ids at evaluated pixels")
        if superclass is not None:
            sc = np.asarray(superclass)[keep]
            credit = sc & np.isin(p, FOREST)
            g = np.where(credit, p, g)
        self.counts += np.bincount(g * NUM_CLASSES + p, minlength=NUM_CLASSES**2).reshape(NUM_CLASSES, NUM_CLASSES)
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp_fp_fn(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        tp = np.diag(self.counts).astype(np.int64)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        return tp, fp, fn


def _scores(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, float]:
    present = den > 0
    if not present.any():
        raise ValueError("confusion matrix is empty")
    per_class = np.full(num.shape, np.nan)
    per_class[present] = num[present] / den[present]
    return per_class, float(per_class[present].mean())


def iou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class TP/(TP+FP+FN) (NaN where undefined) and their mean over defined classes."""
    tp, fp, fn = cm.tp_fp_fn()
    return _scores(tp.astype(np.float64), (tp + fp + fn).astype(np.float64))


def f1(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class 2TP/(2TP+FP+FN) and the unweighted (macro) mean."""
    tp, fp, fn = cm.tp_fp_fn()
    return _scores(2.0 * tp, (2 * tp + fp + fn).astype(np.float64))


def weighted_f1(cm: ConfusionMatrix) -> float:
    """F1 averaged with ground-truth support as weights."""
    per_class, _ = f1(cm)
    support = cm.counts.sum(axis=1)
    ok = ~np.isnan(per_class) & (support > 0)
    if not ok.any():
        return float("nan")
    return float((per_class[ok] * support[ok]).sum() / support[ok].sum())


def mean_iou(pred, gt) -> float:
    return iou(ConfusionMatrix().accumulate(pred, gt))[1]


def _pct(x) -> float | None:
    return None if x is None or np.isnan(x) else round(float(x) * 100.0, 6)


def _summary(dense: ConfusionMatrix | None, points: ConfusionMatrix | None) -> dict:
    out: dict = {"n_pixels": 0, "n_points": 0, "mean_iou": None, "macro_f1": None, "weighted_f1": None}
    per_class = {name: {} for name in CLASS_NAMES[:NUM_CLASSES]}
    if dense is not None and dense.total:
        per_iou, miou = iou(dense)
        tp, fp, fn = dense.tp_fp_fn()
        out["mean_iou"] = _pct(miou)
        out["n_pixels"] = dense.total
        for k, name in enumerate(CLASS_NAMES[:NUM_CLASSES]):
            per_class[name].update(iou=_pct(per_iou[k]), tp=int(tp[k]), fp=int(fp[k]), fn=int(fn[k]))
    if points is not None and points.total:
        per_f1, mf1 = f1(points)
        tp, fp, fn = points.tp_fp_fn()
        out["macro_f1"] = _pct(mf1)
        out["weighted_f1"] = _pct(weighted_f1(points))
        out["n_points"] = points.total
        for k, name in enumerate(CLASS_NAMES[:NUM_CLASSES]):
            per_class[name].update(f1=_pct(per_f1[k]), point_tp=int(tp[k]), point_fp=int(fp[k]),
                                   point_fn=int(fn[k]))
    out["per_class"] = per_class
    return out


def _find(directory: Path, name: str) -> Path:
    path = directory / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no ground truth {path} for prediction {name!r}")
    return path


def evaluate_run(pred_dir, gt_points=None, gt_dense=None, out_dir=None) -> dict:
    """
    Score every prediction raster in ``pred_dir`` against same-named rasters in
    the point and dense ground-truth directories.

    The report holds pooled metrics (confusion matrices summed over sections)
    and a ``sections`` entry per raster; JSON and CSV copies are written to
    ``out_dir`` when given.
    """
    pred_dir = Path(pred_dir)
    if not pred_dir.is_dir():
        raise FileNotFoundError(pred_dir)
    if gt_points is None and gt_dense is None:
        raise ValueError("need point and/or dense ground truth")
    preds = []
    for header in sorted(pred_dir.glob("*.json")):
        raster = read_raster(header)
        if isinstance(raster, LabelRaster):
            preds.append((header.stem, raster))
    if not preds:
        raise FileNotFoundError(f"no prediction rasters in {pred_dir}")

    pooled_dense = ConfusionMatrix() if gt_dense is not None else None
    pooled_points = ConfusionMatrix() if gt_points is not None else None
    sections = {}
    for name, pred in preds:
        dense_cm = points_cm = None
        if gt_dense is not None:
            dense_cm = ConfusionMatrix().accumulate(pred, read_raster(_find(Path(gt_dense), name)))
            pooled_dense += dense_cm
        if gt_points is not None:
            points_cm = ConfusionMatrix().accumulate(pred, read_raster(_find(Path(gt_points), name)))
            pooled_points += points_cm
        s = _summary(dense_cm, points_cm)
        s.pop("per_class")
        sections[name] = s

    report = _summary(pooled_dense, pooled_points)
    report["sections"] = sections
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: dict, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scope", "class", "iou", "f1", "tp", "fp", "fn"])
        for name, row in report["per_class"].items():
            w.writerow(["pooled", name, row.get("iou"), row.get("f1"), row.get("tp"), row.get("fp"), row.get("fn")])
        w.writerow(["pooled", "mean", report["mean_iou"], report["macro_f1"], "", "", ""])
        for sec, row in report["sections"].items():
            w.writerow([sec, "mean", row["mean_iou"], row["macro_f1"], "", "", ""])
