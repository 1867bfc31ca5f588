"""
Sparse ground-truth engineering: scribbles from land-cover polygons, points from
survey records.

The scribble pipeline is remap -> spectral filter -> skeletonize -> buffer ->
urban overlay -> forest split. Every step is a pure LabelRaster -> LabelRaster
function so tiles can be processed independently.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from fuelmap.classes import (
    ARTIFICIAL,
    BROADLEAVES,
    CONIFEROUS,
    FOREST,
    IGNORED,
    UNLABELED,
    class_by_name,
)
from fuelmap.errors import PointConflictError, ShapeMismatchError, UnmappedClassError
from fuelmap.raster import LabelRaster, MultiSpectralImage, SourceRaster, ndvi, ndwi


def _load_resource() -> dict:
    text = resources.files("fuelmap.data").joinpath("class_mapping.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class ClassMapping:
    """Source-scheme id -> fuel class id(s). Multi-target entries mark a super-class."""

    scheme: str
    entries: Mapping[int, tuple[int, ...]]

    @classmethod
    def from_dict(cls, scheme: str, by_class: Mapping[str, Iterable[int]]) -> "ClassMapping":
        entries: dict[int, list[int]] = {}
        for name, ids in by_class.items():
            target = class_by_name(name).id
            for source_id in ids:
                entries.setdefault(int(source_id), []).append(target)
        return cls(scheme, {k: tuple(sorted(v)) for k, v in entries.items()})

    @classmethod
    def clc(cls) -> "ClassMapping":
        return cls.from_dict("CLC", _load_resource()["clc"])

    @classmethod
    def lucas(cls) -> "ClassMapping":
        return cls.from_dict("LUCAS", _load_resource()["lucas"])

    def target(self, source_id: int) -> tuple[int, bool]:
        """Return ``(fuel_class, is_superclass)`` for one source id."""
        try:
            targets = self.entries[int(source_id)]
        except KeyError:
            raise UnmappedClassError({int(source_id): 1}) from None
        if len(targets) == 1:
            return targets[0], False
        if set(targets) == set(FOREST):
            return BROADLEAVES, True
        raise ValueError(f"unsupported multi-target entry {source_id} -> {targets}")


@dataclass(frozen=True)
class ClassPredicate:
    ndvi_min: float | None = None
    ndvi_max: float | None = None
    ndwi_min: float | None = None
    ndwi_max: float | None = None

    def __post_init__(self):
        for lo, hi in ((self.ndvi_min, self.ndvi_max), (self.ndwi_min, self.ndwi_max)):
            for v in (lo, hi):
                if v is not None and not -1.0 <= v <= 1.0:
                    raise ValueError(f"threshold {v} outside [-1, 1]")
            if lo is not None and hi is not None and lo > hi:
                raise ValueError(f"min {lo} > max {hi}")

    @property
    def uses_ndvi(self) -> bool:
        return self.ndvi_min is not None or self.ndvi_max is not None

    @property
    def uses_ndwi(self) -> bool:
        return self.ndwi_min is not None or self.ndwi_max is not None


@dataclass(frozen=True)
class SpectralFilterConfig:
    predicates: Mapping[int, ClassPredicate] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, by_class: Mapping[str, Mapping[str, float]]) -> "SpectralFilterConfig":
        return cls({class_by_name(name).id: ClassPredicate(**p) for name, p in by_class.items()})

    @classmethod
    def default(cls) -> "SpectralFilterConfig":
        """Thresholds shipped with the package; tune them per region."""
        return cls.from_dict(_load_resource()["spectral_filter"])


def _source_ids(raster) -> tuple[np.ndarray, int | None]:
    if isinstance(raster, SourceRaster):
        return raster.ids, raster.nodata
    if isinstance(raster, LabelRaster):
        return raster.classes, UNLABELED
    return np.asarray(raster), None


def remap(raster, mapping: ClassMapping, nodata: int | None = None) -> LabelRaster:
    """
    Translate source-scheme ids to fuel classes.

    Pixels equal to the raster's nodata value become UNLABELED. Raises
    UnmappedClassError listing every unknown id with its pixel count.
    """
    ids, raster_nodata = _source_ids(raster)
    nodata = raster_nodata if nodata is None else nodata
    values, inverse = np.unique(ids, return_inverse=True)
    lut = np.empty(len(values), dtype=np.uint8)
    super_lut = np.zeros(len(values), dtype=bool)
    unmapped = {}
    counts = np.bincount(inverse.ravel(), minlength=len(values))
    for i, v in enumerate(values.tolist()):
        if nodata is not None and v == nodata:
            lut[i] = UNLABELED
        elif v in mapping.entries:
            lut[i], super_lut[i] = mapping.target(v)
        else:
            unmapped[v] = int(counts[i])
    if unmapped:
        raise UnmappedClassError(unmapped)
    inverse = inverse.reshape(ids.shape)
    return LabelRaster(lut[inverse], super_lut[inverse])


def spectral_filter(labels: LabelRaster, image: MultiSpectralImage, cfg: SpectralFilterConfig) -> LabelRaster:
    """Unlabel pixels whose NDVI/NDWI contradicts the class they carry."""
    if labels.shape != image.shape:
        raise ShapeMismatchError(f"labels {labels.shape} vs image {image.shape}")
    if not cfg.predicates:
        return labels
    out = labels.classes.copy()
    need_ndvi = any(p.uses_ndvi for p in cfg.predicates.values())
    need_ndwi = any(p.uses_ndwi for p in cfg.predicates.values())
    vi = ndvi(image) if need_ndvi else None
    wi = ndwi(image) if need_ndwi else None
    for cls_id, pred in cfg.predicates.items():
        sel = labels.classes == cls_id
        if not sel.any():
            continue
        bad = np.zeros_like(sel)
        if pred.ndvi_min is not None:
            bad |= vi < pred.ndvi_min
        if pred.ndvi_max is not None:
            bad |= vi > pred.ndvi_max
        if pred.ndwi_min is not None:
            bad |= wi < pred.ndwi_min
        if pred.ndwi_max is not None:
            bad |= wi > pred.ndwi_max
        out[sel & bad] = UNLABELED
    return LabelRaster(out, labels.superclass)


def _neighbours(img: np.ndarray) -> list[np.ndarray]:
    # P2..P9 clockwise from north, for the interior of a 1-px zero-padded image
    return [
        img[:-2, 1:-1],
        img[:-2, 2:],
        img[1:-1, 2:],
        img[2:, 2:],
        img[2:, 1:-1],
        img[2:, :-2],
        img[1:-1, :-2],
        img[:-2, :-2],
    ]


def thin(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning of a binary mask; pixels outside the mask count as background."""
    img = np.pad(np.asarray(mask, dtype=bool), 1).astype(np.uint8)
    core = img[1:-1, 1:-1]
    while True:
        changed = False
        for first in (True, False):
            p2, p3, p4, p5, p6, p7, p8, p9 = nb = _neighbours(img)
            count = sum(n.astype(np.int8) for n in nb)
            ring = nb + [p2]
            transitions = sum(((a == 0) & (b == 1)).astype(np.int8) for a, b in zip(ring, ring[1:]))
            if first:
                c3 = (p2 & p4 & p6) == 0
                c4 = (p4 & p6 & p8) == 0
            else:
                c3 = (p2 & p4 & p8) == 0
                c4 = (p2 & p6 & p8) == 0
            remove = (core == 1) & (count >= 2) & (count <= 6) & (transitions == 1) & c3 & c4
            if remove.any():
                core[remove] = 0
                changed = True
        if not changed:
            return core.astype(bool)


def skeletonize(labels: LabelRaster) -> LabelRaster:
    """Thin every class mask independently; removed pixels become UNLABELED."""
    out = np.full(labels.shape, UNLABELED, dtype=np.uint8)
    for cls_id in np.unique(labels.classes):
        if cls_id == UNLABELED:
            continue
        mask = labels.classes == cls_id
        rows, cols = np.nonzero(mask)
        r0, r1, c0, c1 = rows.min(), rows.max() + 1, cols.min(), cols.max() + 1
        skel = thin(mask[r0:r1, c0:c1])
        out[r0:r1, c0:c1][skel] = cls_id
    return LabelRaster(out)


def buffer(labels: LabelRaster, radius: float = 5) -> LabelRaster:
    """
    Dilate every class with a Euclidean disk of ``radius`` pixels.

    A pixel reached by several classes takes the class of its nearest labeled
    source pixel; exact ties go to the lower class id.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    present = [int(c) for c in np.unique(labels.classes) if c != UNLABELED]
    if radius == 0 or not present:
        return labels
    dist = np.empty((len(present),) + labels.shape)
    for k, cls_id in enumerate(present):
        dist[k] = ndimage.distance_transform_edt(labels.classes != cls_id)
    nearest = dist.argmin(axis=0)
    reach = dist.min(axis=0) <= radius
    out = np.full(labels.shape, UNLABELED, dtype=np.uint8)
    out[reach] = np.asarray(present, dtype=np.uint8)[nearest[reach]]
    return LabelRaster(out)


def overlay(base: LabelRaster, patch: LabelRaster, classes: Iterable[int]) -> LabelRaster:
    """
    Replace ``classes`` in ``base`` by the same classes from ``patch``.

    Base pixels of a selected class that the patch does not confirm are dropped,
    so the result is a replacement, not a union.
    """
    if base.shape != patch.shape:
        raise ShapeMismatchError(f"base {base.shape} vs patch {patch.shape}")
    classes = list(classes)
    out = base.classes.copy()
    out[np.isin(base.classes, classes)] = UNLABELED
    take = np.isin(patch.classes, classes)
    out[take] = patch.classes[take]
    return LabelRaster(out)


def split_forest(labels: LabelRaster, leaf_type: LabelRaster) -> LabelRaster:
    """Reassign wooded pixels to Broadleaves/Coniferous following a leaf-type layer."""
    if labels.shape != leaf_type.shape:
        raise ShapeMismatchError(f"labels {labels.shape} vs leaf type {leaf_type.shape}")
    leaf = leaf_type.classes
    if not np.isin(leaf, (BROADLEAVES, CONIFEROUS, UNLABELED)).all():
        raise ValueError("leaf type raster may only hold Broadleaves, Coniferous or UNLABELED")
    out = labels.classes.copy()
    wooded = np.isin(out, FOREST) & (leaf != UNLABELED)
    out[wooded] = leaf[wooded]
    return LabelRaster(out, labels.superclass)


@dataclass(frozen=True)
class PointAnnotation:
    row: int
    col: int
    fuel_class: int
    superclass: bool = False

    @classmethod
    def from_lucas(cls, row: int, col: int, lucas_id: int, mapping: ClassMapping | None = None):
        mapping = mapping or ClassMapping.lucas()
        fuel, is_super = mapping.target(lucas_id)
        return cls(int(row), int(col), fuel, is_super)


def read_points_csv(path, mapping: ClassMapping | None = None) -> list[PointAnnotation]:
    """Read ``row,col,lucas_id`` records (header line optional)."""
    mapping = mapping or ClassMapping.lucas()
    points = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            if rec[0].strip() == "row":
                continue
            r, c, lid = (int(x) for x in rec[:3])
            points.append(PointAnnotation.from_lucas(r, c, lid, mapping))
    return points


def write_points_csv(path, rows: Sequence[tuple[int, int, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "lucas_id"])
        w.writerows(rows)


def rasterize_points(points: Sequence[PointAnnotation], height: int, width: int) -> LabelRaster:
    classes = np.full((height, width), UNLABELED, dtype=np.uint8)
    superclass = np.zeros((height, width), dtype=bool)
    for p in points:
        if not (0 <= p.row < height and 0 <= p.col < width):
            raise IndexError(f"point ({p.row}, {p.col}) outside {height}x{width} raster")
        prev = classes[p.row, p.col]
        if prev != UNLABELED and (prev != p.fuel_class or superclass[p.row, p.col] != p.superclass):
            raise PointConflictError(
                f"pixel ({p.row}, {p.col}) has conflicting points: class {prev} and {p.fuel_class}"
            )
        classes[p.row, p.col] = p.fuel_class
        superclass[p.row, p.col] = p.superclass
    return LabelRaster(classes, superclass)


@dataclass(frozen=True)
class PipelineConfig:
    mapping: ClassMapping = field(default_factory=ClassMapping.clc)
    spectral: SpectralFilterConfig = field(default_factory=SpectralFilterConfig.default)
    skeletonize: bool = True
    buffer_radius: float = 5
    urban_classes: tuple[int, ...] = (ARTIFICIAL,)
    # paste UA before thinning instead of after it
    overlay_before_skeleton: bool = False


def build_scribbles(
    clc,
    image: MultiSpectralImage | None = None,
    ua: LabelRaster | None = None,
    hrl: LabelRaster | None = None,
    cfg: PipelineConfig | None = None,
) -> LabelRaster:
    cfg = cfg or PipelineConfig()
    labels = remap(clc, cfg.mapping)
    if image is not None:
        labels = spectral_filter(labels, image, cfg.spectral)
    if ua is not None and cfg.overlay_before_skeleton:
        labels = overlay(labels, ua, cfg.urban_classes)
    if cfg.skeletonize:
        labels = skeletonize(labels)
    labels = buffer(labels, cfg.buffer_radius)
    if ua is not None and not cfg.overlay_before_skeleton:
        labels = overlay(labels, ua, cfg.urban_classes)
    if hrl is not None:
        labels = split_forest(labels, hrl)
    return labels


def split_train_val(tiles: Sequence, fraction: float = 0.9, seed: int = 0) -> tuple[list, list]:
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if len(tiles) == 0:
        raise ValueError("no tiles to split")
    order = np.random.default_rng(seed).permutation(len(tiles))
    n_train = math.ceil(round(fraction * len(tiles), 9))
    return [tiles[i] for i in order[:n_train]], [tiles[i] for i in order[n_train:]]


def load_pipeline_config(path) -> PipelineConfig:
    """Build a PipelineConfig from JSON; omitted sections fall back to the shipped tables."""
    raw = json.loads(Path(path).read_text()) if path else {}
    kwargs = {}
    if "clc" in raw:
        kwargs["mapping"] = ClassMapping.from_dict("CLC", raw["clc"])
    if "spectral_filter" in raw:
        kwargs["spectral"] = SpectralFilterConfig.from_dict(raw["spectral_filter"])
    for key in ("skeletonize", "buffer_radius", "overlay_before_skeleton"):
        if key in raw:
            kwargs[key] = raw[key]
    if "urban_classes" in raw:
        kwargs["urban_classes"] = tuple(class_by_name(n).id for n in raw["urban_classes"])
    return PipelineConfig(**kwargs)


__all__ = [
    "ClassMapping",
    "ClassPredicate",
    "PipelineConfig",
    "PointAnnotation",
    "SpectralFilterConfig",
    "buffer",
    "build_scribbles",
    "overlay",
    "rasterize_points",
    "read_points_csv",
    "remap",
    "skeletonize",
    "spectral_filter",
    "split_forest",
    "split_train_val",
    "thin",
]
