"""
Geometric and photometric augmentation with label-exact geometry, plus
test-time augmentation.

Geometry is restricted to flips, quarter turns and integer shifts so label
rasters are permuted, never resampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from fuelmap.classes import UNLABELED
from fuelmap.net import SegModel, predict_proba
from fuelmap.raster import ProbabilityMap


@dataclass(frozen=True)
class Transform:
    hflip: bool = False
    vflip: bool = False
    quarter_turns: int = 0  # clockwise
    shift: tuple[int, int] = (0, 0)
    blur_sigma: float = 0.0

    @classmethod
    def sample(cls, rng: np.random.Generator, square: bool = True, max_shift: int = 10, blur_prob: float = 0.5):
        hflip = bool(rng.random() < 0.5)
        vflip = bool(rng.random() < 0.5)
        turns = int(rng.integers(4)) if square else 2 * int(rng.integers(2))
        shift = (int(rng.integers(-max_shift, max_shift + 1)), int(rng.integers(-max_shift, max_shift + 1)))
        sigma = float(rng.uniform(0.1, 1.0)) if rng.random() < blur_prob else 0.0
        return cls(hflip, vflip, turns, shift, sigma)

    def geometry(self, arr: np.ndarray, fill) -> np.ndarray:
        """Apply the geometric part to the last two axes of ``arr``."""
        out = arr
        if self.hflip:
            out = out[..., :, ::-1]
        if self.vflip:
            out = out[..., ::-1, :]
        if self.quarter_turns % 4:
            out = np.rot90(out, -self.quarter_turns, axes=(-2, -1))
        dy, dx = self.shift
        if dy or dx:
            shifted = np.full_like(out, fill)
            h, w = out.shape[-2:]
            if abs(dy) >= h or abs(dx) >= w:
                return shifted
            src_r = slice(max(0, -dy), min(h, h - dy))
            dst_r = slice(max(0, dy), min(h, h + dy))
            src_c = slice(max(0, -dx), min(w, w - dx))
            dst_c = slice(max(0, dx), min(w, w + dx))
            shifted[..., dst_r, dst_c] = out[..., src_r, src_c]
            out = shifted
        return np.ascontiguousarray(out)

    def inverse_geometry(self, arr: np.ndarray) -> np.ndarray:
        """Undo flips and turns (shifts are not invertible and must be zero)."""
        if self.shift != (0, 0):
            raise ValueError("shifted views cannot be inverted")
        out = arr
        if self.quarter_turns % 4:
            out = np.rot90(out, self.quarter_turns, axes=(-2, -1))
        if self.vflip:
            out = out[..., ::-1, :]
        if self.hflip:
            out = out[..., :, ::-1]
        return np.ascontiguousarray(out)

    def image(self, bands: np.ndarray) -> np.ndarray:
        out = self.geometry(bands, 0)
        if self.blur_sigma > 0:
            out = ndimage.gaussian_filter(out, sigma=(0,) * (out.ndim - 2) + (self.blur_sigma,) * 2, mode="reflect")
        return out

    def labels(self, arr: np.ndarray, fill=UNLABELED) -> np.ndarray:
        return self.geometry(arr, fill)


def augment(image: np.ndarray, *labels: np.ndarray, seed=None, rng: np.random.Generator | None = None,
            max_shift: int = 10, blur_prob: float = 0.5):
    """
    Draw one random transform and apply it to ``image`` (B x H x W) and every label raster.

    Labels follow the geometry only; blur touches the image alone. Boolean masks
    are filled with False, other label arrays with UNLABELED.
    Returns ``(image, [labels...], transform)``.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    h, w = image.shape[-2:]
    t = Transform.sample(rng, square=h == w, max_shift=max_shift, blur_prob=blur_prob)
    out = []
    for lab in labels:
        lab = np.asarray(lab)
        out.append(t.labels(lab, False if lab.dtype == bool else UNLABELED))
    return t.image(np.asarray(image)), out, t


TTA_VIEWS = (
    Transform(),
    Transform(hflip=True),
    Transform(vflip=True),
    Transform(quarter_turns=2),
)


def tta_infer(model: SegModel, image) -> ProbabilityMap:
    """Average softmax over identity, horizontal flip, vertical flip and 180 degree views."""
    bands = image.bands if hasattr(image, "bands") else np.asarray(image)
    views = np.stack([t.geometry(bands, 0) for t in TTA_VIEWS])
    probs = predict_proba(model, views)
    acc = sum(t.inverse_geometry(p) for t, p in zip(TTA_VIEWS, probs)) / len(TTA_VIEWS)
    acc /= acc.sum(axis=0, keepdims=True)
    return ProbabilityMap(acc)
