"""
Raster containers, the header+payload file format, band arithmetic and tiling.

On disk a raster is a pair of files sharing a stem:

    scene.json   {"width", "height", "bands", "dtype", "band_names", "nodata", ...}
    scene.bin    band-sequential little-endian payload

``dtype`` is ``f32`` (multi-spectral reflectance), ``u8`` (fuel-class labels) or
``u16`` (raw source-scheme class ids such as CLC codes, which do not fit a byte).
Unknown header keys such as ``georef`` are carried through untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence, Union

import numpy as np

from fuelmap.classes import CLASS_NAMES, IGNORED, NUM_CLASSES, UNLABELED
from fuelmap.errors import RasterFormatError, RasterValueError, ShapeMismatchError

PathLike = Union[str, Path]

SENTINEL2_BANDS: tuple[str, ...] = (
    "Coastal",
    "Blue",
    "Green",
    "Red",
    "RedEdge1",
    "RedEdge2",
    "RedEdge3",
    "NIR",
    "NIRNarrow",
    "WaterVapour",
    "SWIR1",
    "SWIR2",
)
REQUIRED_BANDS = ("Red", "Green", "NIR")

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1"), "u16": np.dtype("<u2")}
_RESERVED_KEYS = {"width", "height", "bands", "dtype", "band_names", "nodata", "payload"}


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MultiSpectralImage:
    """B x H x W reflectance stack with named bands."""

    bands: np.ndarray
    band_names: tuple[str, ...] = SENTINEL2_BANDS
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        bands = np.array(self.bands, dtype=np.float32)
        if bands.ndim != 3:
            raise RasterValueError(f"image must be B x H x W, got shape {bands.shape}")
        names = tuple(self.band_names)
        if len(names) != bands.shape[0]:
            raise RasterValueError(f"{bands.shape[0]} bands but {len(names)} band names")
        if bands.shape[0] < 4:
            raise RasterValueError("image needs at least 4 bands")
        missing = [b for b in REQUIRED_BANDS if b not in names]
        if missing:
            raise RasterValueError(f"image is missing required bands {missing}")
        if not np.isfinite(bands).all():
            raise RasterValueError("image contains non-finite values")
        object.__setattr__(self, "bands", _frozen(bands))
        object.__setattr__(self, "band_names", names)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bands.shape[1:]

    def band(self, name: str) -> np.ndarray:
        try:
            return self.bands[self.band_names.index(name)]
        except ValueError:
            raise KeyError(f"band {name!r} not in {list(self.band_names)}") from None

    def with_bands(self, bands: np.ndarray) -> "MultiSpectralImage":
        return MultiSpectralImage(bands, self.band_names, dict(self.meta))


@dataclass(frozen=True, eq=False)
class LabelRaster:
    """
    H x W fuel-class ids, with UNLABELED (255) marking pixels without annotation.

    ``superclass`` optionally flags pixels whose label stands for the forest
    super-class (LUCAS id 4); such pixels are stored as Broadleaves.
    """

    classes: np.ndarray
    superclass: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.classes)
        if arr.ndim != 2:
            raise RasterValueError(f"label raster must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise RasterValueError("label values out of u8 range")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        bad = (arr > IGNORED) & (arr != UNLABELED)
        if bad.any():
            raise RasterValueError(f"invalid fuel class ids {sorted(set(arr[bad].tolist()))}")
        object.__setattr__(self, "classes", _frozen(arr))
        if self.superclass is not None:
            sc = np.array(self.superclass, dtype=bool)
            if sc.shape != arr.shape:
                raise ShapeMismatchError("superclass mask shape differs from labels")
            if not sc.any():
                sc = None
            else:
                sc = _frozen(sc)
            object.__setattr__(self, "superclass", sc)

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape

    @property
    def labeled(self) -> np.ndarray:
        return self.classes != UNLABELED

    @property
    def trainable(self) -> np.ndarray:
        return self.classes < NUM_CLASSES

    @classmethod
    def empty(cls, height: int, width: int) -> "LabelRaster":
        return cls(np.full((height, width), UNLABELED, dtype=np.uint8))

    def __eq__(self, other):
        if not isinstance(other, LabelRaster):
            return NotImplemented
        sc_a = self.superclass if self.superclass is not None else np.zeros(self.shape, bool)
        sc_b = other.superclass if other.superclass is not None else np.zeros(other.shape, bool)
        return np.array_equal(self.classes, other.classes) and np.array_equal(sc_a, sc_b)


@dataclass(frozen=True, eq=False)
class SourceRaster:
    """Raw source-scheme class ids (e.g. CLC codes) before remapping."""

    ids: np.ndarray
    nodata: int | None = 0
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.ids)
        if arr.ndim != 2:
            raise RasterValueError(f"source raster must be 2-D, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 65535):
            raise RasterValueError("source ids out of u16 range")
        object.__setattr__(self, "ids", _frozen(arr.astype(np.uint16)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """C x H x W per-pixel class distribution over the trainable classes."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs)
        if p.ndim != 3 or p.shape[0] != NUM_CLASSES:
            raise RasterValueError(f"probability map must be {NUM_CLASSES} x H x W, got {p.shape}")
        if p.size and (p.min() < 0 or p.max() > 1):
            raise RasterValueError("probabilities outside [0, 1]")
        if p.size and np.abs(p.sum(axis=0, dtype=np.float64) - 1).max() > 1e-6:
            raise RasterValueError("probabilities do not sum to 1")
        object.__setattr__(self, "probs", _frozen(np.array(p)))

    def argmax(self) -> LabelRaster:
        return LabelRaster(self.probs.argmax(axis=0).astype(np.uint8))


@dataclass(frozen=True, eq=False)
class WeightMap:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise RasterValueError("weight map must be 2-D")
        if w.size and (w.min() < 0 or w.max() > 1):
            raise RasterValueError("weights outside [0, 1]")
        object.__setattr__(self, "weights", _frozen(w))


Raster = Union[MultiSpectralImage, LabelRaster, SourceRaster, ProbabilityMap]


def _paths(path: PathLike) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".bin")


def write_raster(raster: Raster, path: PathLike) -> Path:
    """Write ``raster`` as ``<path>.json`` + ``<path>.bin``; returns the header path."""
    header_path, payload_path = _paths(path)
    if isinstance(raster, MultiSpectralImage):
        data, dtype = raster.bands, "f32"
        names, nodata = list(raster.band_names), None
        if not np.isfinite(data).all():
            raise RasterValueError("image contains non-finite values")
    elif isinstance(raster, LabelRaster):
        data, dtype = raster.classes[None], "u8"
        names, nodata = ["labels"], UNLABELED
    elif isinstance(raster, SourceRaster):
        data, dtype = raster.ids[None], "u16"
        names, nodata = ["source_ids"], raster.nodata
    elif isinstance(raster, ProbabilityMap):
        data, dtype = raster.probs, "f32"
        names, nodata = list(CLASS_NAMES[:NUM_CLASSES]), None
    else:
        raise TypeError(f"cannot write {type(raster).__name__}")

    header: dict[str, Any] = {
        "width": int(data.shape[2]),
        "height": int(data.shape[1]),
        "bands": int(data.shape[0]),
        "dtype": dtype,
        "band_names": names,
        "nodata": nodata,
        "payload": payload_path.name,
    }
    if isinstance(raster, LabelRaster) and raster.superclass is not None:
        rows, cols = np.nonzero(raster.superclass)
        header["superclass_pixels"] = [[int(r), int(c)] for r, c in zip(rows, cols)]
    if isinstance(raster, ProbabilityMap):
        header["kind"] = "probability"
    for k, v in getattr(raster, "meta", {}).items():
        if k not in _RESERVED_KEYS:
            header[k] = v

    header_path.parent.mkdir(parents=True, exist_ok=True)
    payload_path.write_bytes(np.ascontiguousarray(data, dtype=_DTYPES[dtype]).tobytes())
    header_path.write_text(json.dumps(header, indent=1))
    return header_path


def _read_header(header_path: Path) -> dict[str, Any]:
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise RasterFormatError(f"{header_path}: malformed header ({exc})") from exc
    if not isinstance(header, dict):
        raise RasterFormatError(f"{header_path}: header is not an object")
    for key in ("width", "height", "bands", "dtype"):
        if key not in header:
            raise RasterFormatError(f"{header_path}: header missing {key!r}")
    for key in ("width", "height", "bands"):
        v = header[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise RasterFormatError(f"{header_path}: {key} must be a non-negative integer")
    if header["dtype"] not in _DTYPES:
        raise RasterFormatError(f"{header_path}: unknown dtype {header['dtype']!r}")
    names = header.get("band_names")
    if names is not None and len(names) != header["bands"]:
        raise RasterFormatError(f"{header_path}: band_names length differs from bands")
    return header


def read_raster(path: PathLike) -> Raster:
    """
    Read a raster written by :func:`write_raster`.

    u8 single-band files become a LabelRaster, f32 files a MultiSpectralImage and
    u16 single-band files a SourceRaster.
    """
    header_path, payload_path = _paths(path)
    if not header_path.exists():
        raise FileNotFoundError(header_path)
    header = _read_header(header_path)
    if "payload" in header:
        payload_path = header_path.with_name(header["payload"])
    if not payload_path.exists():
        raise FileNotFoundError(payload_path)

    dtype = _DTYPES[header["dtype"]]
    b, h, w = header["bands"], header["height"], header["width"]
    raw = payload_path.read_bytes()
    expected = b * h * w * dtype.itemsize
    if len(raw) != expected:
        raise RasterFormatError(
            f"{payload_path}: payload is {len(raw)} bytes, header implies {expected}"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(b, h, w)
    meta = {k: v for k, v in header.items() if k not in _RESERVED_KEYS and k != "superclass_pixels"}

    if header["dtype"] == "f32" and header.get("kind") == "probability":
        return ProbabilityMap(data.astype(np.float32))
    if header["dtype"] == "f32":
        names = header.get("band_names") or list(SENTINEL2_BANDS[:b])
        return MultiSpectralImage(data.astype(np.float32), tuple(names), meta)
    if b != 1:
        raise RasterFormatError(f"{header_path}: {header['dtype']} rasters must be single-band")
    if header["dtype"] == "u16":
        return SourceRaster(data[0], header.get("nodata"), meta)
    superclass = None
    if header.get("superclass_pixels"):
        superclass = np.zeros((h, w), dtype=bool)
        for r, c in header["superclass_pixels"]:
            superclass[r, c] = True
    return LabelRaster(data[0], superclass, meta)


def tile_offsets(length: int, tile_size: int, stride: int) -> list[int]:
    if tile_size <= 0 or stride <= 0:
        raise ValueError("tile_size and stride must be positive")
    if tile_size > length:
        raise ValueError(f"tile_size {tile_size} exceeds raster extent {length}")
    offsets = list(range(0, length - tile_size + 1, stride))
    if offsets[-1] + tile_size < length:
        offsets.append(length - tile_size)
    return offsets


def _crop(raster, r: int, c: int, size: int):
    sl = np.s_[r : r + size, c : c + size]
    if isinstance(raster, MultiSpectralImage):
        return raster.with_bands(raster.bands[:, sl[0], sl[1]])
    if isinstance(raster, LabelRaster):
        sc = None if raster.superclass is None else raster.superclass[sl]
        return LabelRaster(raster.classes[sl], sc, dict(raster.meta))
    if isinstance(raster, SourceRaster):
        return SourceRaster(raster.ids[sl], raster.nodata, dict(raster.meta))
    arr = np.asarray(raster)
    return arr[..., sl[0], sl[1]]


def tile(raster, tile_size: int, stride: int | None = None) -> Iterator[tuple[int, int, Any]]:
    """
    Yield ``(row, col, sub_raster)`` chips in row-major order.

    The last row and column of chips are clamped to the raster border, so they
    may overlap their neighbours; no pixel is fabricated by padding.
    """
    stride = tile_size if stride is None else stride
    if tile_size == 0:
        raise ValueError("tile_size must be positive")
    h, w = raster.shape[-2:] if isinstance(raster, np.ndarray) else raster.shape
    rows = tile_offsets(h, tile_size, stride)
    cols = tile_offsets(w, tile_size, stride)
    for r in rows:
        for c in cols:
            yield r, c, _crop(raster, r, c, tile_size)


def mosaic(tiles: Sequence[tuple[int, int, np.ndarray]], shape: tuple[int, ...], fill=0) -> np.ndarray:
    """Paste array chips back at their offsets; later chips overwrite earlier ones."""
    first = np.asarray(tiles[0][2])
    out = np.full(tuple(shape), fill, dtype=first.dtype)
    for r, c, chip in tiles:
        chip = np.asarray(chip)
        out[..., r : r + chip.shape[-2], c : c + chip.shape[-1]] = chip
    return out


def normalized_difference(image: MultiSpectralImage, band_a: str, band_b: str, eps: float = 1e-12) -> np.ndarray:
    """(a - b) / (a + b) per pixel, 0 where the denominator vanishes."""
    a = image.band(band_a).astype(np.float64)
    b = image.band(band_b).astype(np.float64)
    den = a + b
    safe = np.abs(den) >= eps
    out = np.zeros_like(den)
    np.divide(a - b, den, out=out, where=safe)
    return np.clip(out, -1.0, 1.0)


def ndvi(image: MultiSpectralImage) -> np.ndarray:
    return normalized_difference(image, "NIR", "Red")


def ndwi(image: MultiSpectralImage) -> np.ndarray:
    return normalized_difference(image, "Green", "NIR")
