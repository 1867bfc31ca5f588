"""
Synthetic benchmark scenes with known dense ground truth.

A scene is a Voronoi partition whose cells carry one fuel class each. Pixel
reflectance is the class spectrum, scaled by a per-cell brightness factor and
shifted by a per-cell haze offset, plus Gaussian noise. Scribbles can optionally
be spectrally filtered against the noiseless reflectance before thinning. Scribbles are derived from the dense labels the same way
real scribbles are derived from land-cover polygons (thin, then buffer), and
point labels are uniform random pixels.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from fuelmap.annotations import (
    ClassMapping,
    PointAnnotation,
    SpectralFilterConfig,
    buffer,
    rasterize_points,
    skeletonize,
    spectral_filter,
    write_points_csv,
)
from fuelmap.classes import NUM_CLASSES, UNLABELED, WETLANDS
from fuelmap.raster import SENTINEL2_BANDS, LabelRaster, MultiSpectralImage, write_raster

# Rough surface reflectance spectra, band order as SENTINEL2_BANDS.
SIGNATURES = np.array(
    [
        [0.10, 0.12, 0.14, 0.16, 0.18, 0.19, 0.20, 0.21, 0.21, 0.20, 0.24, 0.22],  # Artificial
        [0.12, 0.15, 0.20, 0.25, 0.27, 0.28, 0.29, 0.30, 0.31, 0.30, 0.38, 0.33],  # Bare
        [0.04, 0.05, 0.07, 0.06, 0.10, 0.16, 0.19, 0.21, 0.22, 0.18, 0.14, 0.08],  # Wetlands
        [0.06, 0.06, 0.05, 0.03, 0.025, 0.02, 0.02, 0.015, 0.015, 0.01, 0.01, 0.005],  # Water
        [0.04, 0.05, 0.09, 0.08, 0.14, 0.25, 0.29, 0.31, 0.32, 0.28, 0.26, 0.16],  # Grassland
        [0.05, 0.06, 0.10, 0.09, 0.16, 0.30, 0.36, 0.39, 0.40, 0.36, 0.25, 0.14],  # Agricultural
        [0.03, 0.04, 0.07, 0.04, 0.10, 0.30, 0.38, 0.42, 0.43, 0.38, 0.20, 0.09],  # Broadleaves
        [0.02, 0.03, 0.05, 0.03, 0.07, 0.18, 0.22, 0.24, 0.25, 0.22, 0.12, 0.05],  # Coniferous
        [0.04, 0.05, 0.08, 0.08, 0.12, 0.20, 0.23, 0.25, 0.26, 0.23, 0.22, 0.13],  # Shrubs
    ]
)

# fuel class -> LUCAS id used when writing survey points (Wetlands has none)
_LUCAS_OF = {0: 7, 1: 6, 3: 8, 4: 3, 5: 1, 6: 4, 7: 4, 8: 5}


@dataclass
class SynthConfig:
    seed: int = 0
    n_scenes: int = 6
    height: int = 128
    width: int = 128
    n_regions: int = 10
    sigma: float = 0.05
    # per-cell multiplicative brightness drawn from U(1 - b, 1 + b)
    brightness: float = 0.0
    # per-cell additive offset drawn from U(0, haze), same for every band
    haze: float = 0.0
    # drop scribbles of cells whose noiseless spectrum fails the default NDVI/NDWI filter
    filter_scribbles: bool = False
    signatures: list[list[float]] = field(default_factory=lambda: SIGNATURES.tolist())
    skeletonize: bool = True
    buffer_radius: float = 5
    # probability that a cell's scribble survives (models filtered / missing polygons)
    scribble_keep: float = 0.4
    n_points: int = 40

    def __post_init__(self):
        if self.n_regions < 1:
            raise ValueError("n_regions must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        sig = np.asarray(self.signatures, dtype=np.float64)
        if sig.shape != (NUM_CLASSES, len(SENTINEL2_BANDS)):
            raise ValueError(f"signatures must be {NUM_CLASSES} x {len(SENTINEL2_BANDS)}")
        if self.haze < 0 or not 0 <= self.brightness < 1:
            raise ValueError("haze must be >= 0 and brightness in [0, 1)")
        if not 0 <= self.scribble_keep <= 1:
            raise ValueError("scribble_keep must lie in [0, 1]")

    @classmethod
    def load(cls, path) -> "SynthConfig":
        raw = json.loads(Path(path).read_text())
        return cls(**raw.get("synth", raw))


@dataclass
class Scene:
    name: str
    image: MultiSpectralImage
    dense: LabelRaster
    scribbles: LabelRaster
    points: LabelRaster
    point_records: list[tuple[int, int, int]]


def voronoi_labels(rng: np.random.Generator, height: int, width: int, n_regions: int):
    """Return (cell index map, class per cell)."""
    seeds = rng.uniform((0, 0), (height, width), size=(n_regions, 2))
    rr, cc = np.mgrid[0:height, 0:width]
    d2 = (rr[None] - seeds[:, 0, None, None]) ** 2 + (cc[None] - seeds[:, 1, None, None]) ** 2
    cells = d2.argmin(axis=0)
    classes = rng.integers(NUM_CLASSES, size=n_regions)
    return cells, classes


def make_scene(cfg: SynthConfig, rng: np.random.Generator, name: str = "scene") -> Scene:
    h, w = cfg.height, cfg.width
    cells, cell_class = voronoi_labels(rng, h, w, cfg.n_regions)
    dense = cell_class[cells].astype(np.uint8)

    sig = np.asarray(cfg.signatures, dtype=np.float64)
    scale = rng.uniform(1 - cfg.brightness, 1 + cfg.brightness, size=cfg.n_regions)
    offset = rng.uniform(0.0, cfg.haze, size=cfg.n_regions)
    clean = sig[dense].transpose(2, 0, 1) * scale[cells][None] + offset[cells][None]
    bands = clean + rng.normal(0.0, cfg.sigma, size=clean.shape)
    image = MultiSpectralImage(bands.astype(np.float32))

    scrib = LabelRaster(dense)
    if cfg.filter_scribbles:
        scrib = spectral_filter(scrib, MultiSpectralImage(clean), SpectralFilterConfig.default())
    if cfg.skeletonize:
        scrib = skeletonize(scrib)
    scrib = buffer(scrib, cfg.buffer_radius)
    keep_cell = rng.random(cfg.n_regions) < cfg.scribble_keep
    classes = scrib.classes.copy()
    classes[~keep_cell[cells]] = UNLABELED
    scribbles = LabelRaster(classes)

    eligible = np.flatnonzero(dense.ravel() != WETLANDS)
    n = min(cfg.n_points, eligible.size)
    flat = np.sort(rng.choice(eligible, size=n, replace=False))
    records = [(int(i // w), int(i % w), _LUCAS_OF[int(dense.flat[i])]) for i in flat]
    lucas = ClassMapping.lucas()
    points = rasterize_points([PointAnnotation.from_lucas(r, c, lid, lucas) for r, c, lid in records], h, w)
    return Scene(name, image, LabelRaster(dense), scribbles, points, records)


def generate(cfg: SynthConfig) -> list[Scene]:
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_scenes)
    return [make_scene(cfg, np.random.default_rng(s), f"scene_{k:03d}") for k, s in enumerate(seqs)]


def write_dataset(scenes: list[Scene], out_dir, cfg: SynthConfig | None = None) -> Path:
    """Layout: images/, dense/, scribbles/, points/ (rasters) and points_csv/, one file per scene."""
    out = Path(out_dir)
    for s in scenes:
        write_raster(s.image, out / "images" / s.name)
        write_raster(s.dense, out / "dense" / s.name)
        write_raster(s.scribbles, out / "scribbles" / s.name)
        write_raster(s.points, out / "points" / s.name)
        (out / "points_csv").mkdir(parents=True, exist_ok=True)
        write_points_csv(out / "points_csv" / f"{s.name}.csv", s.point_records)
    manifest = {"scenes": [s.name for s in scenes]}
    if cfg is not None:
        manifest["synth"] = asdict(cfg)
    (out / "dataset.json").write_text(json.dumps(manifest, indent=1))
    return out


def nearest_signature(image: MultiSpectralImage, signatures) -> np.ndarray:
    sig = np.asarray(signatures, dtype=np.float64)
    px = image.bands.reshape(image.bands.shape[0], -1).T.astype(np.float64)
    d = ((px[:, None, :] - sig[None]) ** 2).sum(axis=-1)
    return d.argmin(axis=1).reshape(image.shape).astype(np.uint8)
