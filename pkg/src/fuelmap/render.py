"""PNG rendering of fuel maps over a grayscale composite of the input image."""

from __future__ import annotations

import numpy as np
from PIL import Image

from fuelmap.classes import FUEL_CLASSES, UNLABELED
from fuelmap.raster import LabelRaster, MultiSpectralImage

PALETTE = np.zeros((256, 3), dtype=np.uint8)
for _c in FUEL_CLASSES:
    PALETTE[_c.id] = _c.color


def colorize(labels: LabelRaster) -> np.ndarray:
    """H x W x 3 uint8 map with each class in its legend color (UNLABELED stays black)."""
    return PALETTE[labels.classes]


def grayscale(image: MultiSpectralImage) -> np.ndarray:
    rgb = np.stack([image.band(b) for b in ("Red", "Green", "Blue") if b in image.band_names])
    gray = rgb.mean(axis=0)
    lo, hi = np.percentile(gray, [2, 98])
    if hi <= lo:
        return np.full(gray.shape, 128.0)
    return np.clip((gray - lo) / (hi - lo), 0, 1) * 255.0


def render(labels: LabelRaster, image: MultiSpectralImage | None = None, alpha: float = 0.5) -> np.ndarray:
    """Blend class colors at ``alpha`` over the image's grayscale composite."""
    color = colorize(labels).astype(np.float64)
    if image is None:
        return color.astype(np.uint8)
    gray = grayscale(image)[..., None]
    out = alpha * color + (1 - alpha) * gray
    unlabeled = labels.classes == UNLABELED
    out[unlabeled] = np.repeat(gray, 3, axis=-1)[unlabeled]
    return np.round(out).astype(np.uint8)


def save_png(labels: LabelRaster, path, image: MultiSpectralImage | None = None) -> None:
    Image.fromarray(render(labels, image)).save(path)
