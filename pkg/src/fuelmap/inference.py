from __future__ import annotations

import numpy as np

from fuelmap.errors import ShapeMismatchError
from fuelmap.net import SegModel, predict_proba
from fuelmap.raster import MultiSpectralImage, ProbabilityMap, tile_offsets
from fuelmap.selftrain.augment import tta_infer


def _tile_probs(model: SegModel, bands: np.ndarray, tta: bool) -> np.ndarray:
    if tta:
        return tta_infer(model, bands).probs.astype(np.float64)
    return predict_proba(model, bands)


def infer_image(
    model: SegModel,
    image: MultiSpectralImage,
    tile_size: int = 512,
    overlap: int = 32,
    tta: bool = False,
) -> ProbabilityMap:
    """
    Class probabilities for an arbitrarily large image.

    The image is cut into chips of ``tile_size`` overlapping by at least
    ``overlap`` pixels (border chips are clamped inward); probabilities are
    averaged where chips overlap.
    """
    h, w = image.shape
    step = 2 ** model.levels
    th, tw = min(tile_size, h), min(tile_size, w)
    if th % step or tw % step:
        raise ShapeMismatchError(f"tile {th}x{tw} is not divisible by {step}")
    if overlap >= min(th, tw) and (th < h or tw < w):
        raise ValueError("overlap must be smaller than the tile size")
    rows = tile_offsets(h, th, max(th - overlap, 1))
    cols = tile_offsets(w, tw, max(tw - overlap, 1))
    acc = np.zeros((model.num_classes, h, w))
    hits = np.zeros((h, w))
    for r in rows:
        for c in cols:
            chip = image.bands[:, r : r + th, c : c + tw]
            acc[:, r : r + th, c : c + tw] += _tile_probs(model, chip, tta)
            hits[r : r + th, c : c + tw] += 1
    acc /= hits
    acc /= acc.sum(axis=0, keepdims=True)
    return ProbabilityMap(acc)
