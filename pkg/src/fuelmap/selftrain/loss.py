from __future__ import annotations

import numpy as np

from fuelmap.classes import BROADLEAVES, CONIFEROUS, IGNORED, NUM_CLASSES
from fuelmap.raster import LabelRaster


def weighted_ce(
    logits: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None,
    class_weights: np.ndarray,
    superclass: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """
    Mean weighted cross-entropy over labeled pixels, and its gradient.

    ``logits`` is (P, C); ``labels`` (P,) with ids >= C treated as unlabeled.
    Pixels flagged in ``superclass`` are scored against the forest super-class,
    i.e. -log(p_broadleaves + p_coniferous).
    """
    grad = np.zeros_like(logits, dtype=np.float64)
    valid = labels < NUM_CLASSES
    n = int(valid.sum())
    if n == 0:
        return 0.0, grad
    z = logits[valid].astype(np.float64)
    y = labels[valid].astype(np.intp)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)[valid]
    sc = np.zeros(n, dtype=bool) if superclass is None else np.asarray(superclass)[valid]

    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    denom = e.sum(axis=1, keepdims=True)
    lse = np.log(denom)[:, 0] + zmax[:, 0]
    p = e / denom

    target = np.zeros_like(p)
    rows = np.arange(n)
    target[rows, y] = 1.0
    ce = lse - z[rows, y]
    cw = class_weights[y].astype(np.float64)
    if sc.any():
        forest = [BROADLEAVES, CONIFEROUS]
        zf = z[sc][:, forest]
        fmax = zf.max(axis=1, keepdims=True)
        ef = np.exp(zf - fmax)
        ce[sc] = lse[sc] - (np.log(ef.sum(axis=1)) + fmax[:, 0])
        t = np.zeros((int(sc.sum()), p.shape[1]))
        t[:, forest] = ef / ef.sum(axis=1, keepdims=True)
        target[sc] = t
        cw[sc] = class_weights[forest].mean()

    coef = w * cw
    loss = float((coef * ce).sum() / n)
    grad[valid] = (p - target) * (coef / n)[:, None]
    return loss, grad


def _flat(logits: np.ndarray) -> np.ndarray:
    # (..., C, H, W) -> (P, C)
    c = logits.shape[-3]
    return np.moveaxis(logits, -3, -1).reshape(-1, c)


def _unflat(grad: np.ndarray, shape) -> np.ndarray:
    moved = shape[:-3] + shape[-2:] + shape[-3:-2]
    return np.moveaxis(grad.reshape(moved), -1, -3)


def seg_loss_terms(
    logits: np.ndarray,
    mixed_labels: np.ndarray,
    mixed_weights: np.ndarray,
    points: np.ndarray | None,
    class_weights: np.ndarray,
    lam: float,
    point_superclass: np.ndarray | None = None,
    weighted_point_loss: bool = True,
) -> tuple[float, float, np.ndarray]:
    """Return (L_S, L_P, dTotal/dLogits) for channel-first logits (..., C, H, W)."""
    if not np.isfinite(logits).all():
        raise ValueError("non-finite logits")
    flat = _flat(logits)
    ls, grad = weighted_ce(flat, np.ravel(mixed_labels), np.ravel(mixed_weights), class_weights)
    lp = 0.0
    if points is not None and lam > 0:
        cw = class_weights if weighted_point_loss else np.append(np.ones(NUM_CLASSES), 0.0)
        sc = None if point_superclass is None else np.ravel(point_superclass)
        lp, gp = weighted_ce(flat, np.ravel(points), None, cw, sc)
        grad += lam * gp
    return ls, lp, _unflat(grad, logits.shape)


def loss_seg(logits, mixed, points: LabelRaster | None, cfg) -> tuple[float, np.ndarray]:
    """
    Two-term segmentation loss L_S(mixed) + lambda * L_P(points) and its gradient.

    ``cfg`` supplies ``lam``, ``class_weights`` (None = all ones) and
    ``weighted_point_loss``.
    """
    cw = cfg.class_weights
    cw = np.append(np.ones(NUM_CLASSES), 0.0) if cw is None else np.asarray(cw, dtype=np.float64)
    if cw[IGNORED] != 0:
        raise ValueError("the Ignored class weight must be 0")
    pts = None if points is None else points.classes
    sc = None if points is None else points.superclass
    ls, lp, grad = seg_loss_terms(
        np.asarray(logits),
        mixed.labels.classes,
        mixed.weights.weights,
        pts,
        cw,
        cfg.lam,
        sc,
        getattr(cfg, "weighted_point_loss", True),
    )
    return ls + cfg.lam * lp, grad
