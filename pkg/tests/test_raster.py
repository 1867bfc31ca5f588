import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fuelmap.classes import FUEL_CLASSES, IGNORED, UNLABELED
from fuelmap.errors import RasterFormatError, RasterValueError
from fuelmap.raster import (
    SENTINEL2_BANDS,
    LabelRaster,
    MultiSpectralImage,
    ProbabilityMap,
    SourceRaster,
    WeightMap,
    mosaic,
    ndvi,
    normalized_difference,
    read_raster,
    tile,
    write_raster,
)


def _image_with(**bands):
    arr = np.zeros((12, 1, 1), dtype=np.float32)
    for name, v in bands.items():
        arr[SENTINEL2_BANDS.index(name)] = v
    return MultiSpectralImage(arr)


def test_fuel_class_table():
    assert len(FUEL_CLASSES) == 10
    assert [c.id for c in FUEL_CLASSES] == list(range(10))
    assert FUEL_CLASSES[0].name == "Artificial"
    assert FUEL_CLASSES[8].name == "Shrubs"
    assert FUEL_CLASSES[IGNORED].name == "Ignored"


def test_read_label_raster_from_raw_bytes(tmp_path):
    (tmp_path / "lab.json").write_text(
        json.dumps({"width": 2, "height": 2, "bands": 1, "dtype": "u8", "band_names": ["labels"], "nodata": 255})
    )
    (tmp_path / "lab.bin").write_bytes(bytes([0, 1, 255, 8]))
    r = read_raster(tmp_path / "lab.json")
    assert isinstance(r, LabelRaster)
    assert r.classes.tolist() == [[0, 1], [UNLABELED, 8]]


def test_image_round_trip(tmp_path, rng):
    img = MultiSpectralImage(rng.random((12, 16, 16)).astype(np.float32))
    write_raster(img, tmp_path / "img")
    back = read_raster(tmp_path / "img")
    assert isinstance(back, MultiSpectralImage)
    assert back.bands.tobytes() == img.bands.tobytes()
    assert back.band_names == img.band_names


def test_short_payload_is_rejected(tmp_path):
    (tmp_path / "lab.json").write_text(json.dumps({"width": 2, "height": 2, "bands": 1, "dtype": "u8"}))
    (tmp_path / "lab.bin").write_bytes(bytes(3))
    with pytest.raises(RasterFormatError, match="payload"):
        read_raster(tmp_path / "lab")


@pytest.mark.parametrize(
    "header",
    [
        "{not json",
        json.dumps({"width": 2, "height": 2, "bands": 1}),
        json.dumps({"width": 2, "height": 2, "bands": 1, "dtype": "f64"}),
        json.dumps({"width": -1, "height": 2, "bands": 1, "dtype": "u8"}),
    ],
)
def test_malformed_headers(tmp_path, header):
    (tmp_path / "x.json").write_text(header)
    (tmp_path / "x.bin").write_bytes(bytes(4))
    with pytest.raises(RasterFormatError):
        read_raster(tmp_path / "x")


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_raster(tmp_path / "nothing")


def test_all_unlabeled_payload_is_ff(tmp_path):
    write_raster(LabelRaster.empty(3, 5), tmp_path / "e")
    assert (tmp_path / "e.bin").read_bytes() == b"\xff" * 15


def test_nan_image_is_rejected():
    bands = np.zeros((12, 2, 2), dtype=np.float32)
    bands[3, 1, 1] = np.nan
    with pytest.raises(RasterValueError):
        MultiSpectralImage(bands)


def test_image_band_invariants():
    with pytest.raises(RasterValueError):
        MultiSpectralImage(np.zeros((3, 2, 2)), ("Red", "Green", "NIR"))
    with pytest.raises(RasterValueError):
        MultiSpectralImage(np.zeros((4, 2, 2)), ("A", "B", "C", "D"))
    MultiSpectralImage(np.zeros((4, 2, 2)), ("Blue", "Green", "Red", "NIR"))


def test_label_invariants():
    with pytest.raises(RasterValueError):
        LabelRaster(np.array([[10]]))
    LabelRaster(np.array([[9, 255]]))


def test_rasters_are_immutable(rng):
    lab = LabelRaster(np.zeros((2, 2), np.uint8))
    with pytest.raises(ValueError):
        lab.classes[0, 0] = 1


def test_source_and_probability_round_trip(tmp_path, rng):
    src = SourceRaster(np.array([[311, 999], [0, 512]]), nodata=0, meta={"georef": {"epsg": 3035}})
    write_raster(src, tmp_path / "clc")
    back = read_raster(tmp_path / "clc")
    assert isinstance(back, SourceRaster)
    assert back.ids.tolist() == src.ids.tolist() and back.nodata == 0
    assert back.meta["georef"] == {"epsg": 3035}

    p = rng.random((9, 4, 4))
    p = (p / p.sum(axis=0)).astype(np.float32)
    pm = ProbabilityMap(p / p.sum(axis=0))
    write_raster(pm, tmp_path / "probs")
    back = read_raster(tmp_path / "probs")
    assert isinstance(back, ProbabilityMap)
    assert back.probs.astype(np.float32).tobytes() == pm.probs.astype(np.float32).tobytes()


def test_superclass_flags_survive_io(tmp_path):
    sc = np.zeros((3, 3), bool)
    sc[1, 2] = True
    lab = LabelRaster(np.full((3, 3), 6, np.uint8), sc)
    write_raster(lab, tmp_path / "pts")
    assert read_raster(tmp_path / "pts") == lab


def test_probability_and_weight_invariants():
    with pytest.raises(RasterValueError):
        ProbabilityMap(np.full((9, 2, 2), 0.2))
    ProbabilityMap(np.full((9, 2, 2), 1 / 9))
    with pytest.raises(RasterValueError):
        WeightMap(np.array([[1.5]]))


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float32, st.tuples(st.integers(4, 6), st.integers(1, 9), st.integers(1, 9)),
           elements=st.floats(-10, 10, width=32)),
)
def test_image_round_trip_property(tmp_path_factory, bands):
    names = SENTINEL2_BANDS[1:4] + ("NIR",) + tuple(f"x{i}" for i in range(bands.shape[0] - 4))
    img = MultiSpectralImage(bands, names)
    path = tmp_path_factory.mktemp("rt") / "img"
    write_raster(img, path)
    assert read_raster(path).bands.tobytes() == img.bands.tobytes()


# -- tiling -----------------------------------------------------------------

def test_tile_counts():
    img = np.zeros((2048, 2048), np.uint8)
    assert len(list(tile(img, 512, 512))) == 16
    single = list(tile(np.zeros((512, 512)), 512))
    assert [(r, c) for r, c, _ in single] == [(0, 0)]


def test_clamped_border_tiles():
    offsets = [(r, c) for r, c, _ in tile(np.zeros((600, 600)), 512, 512)]
    assert offsets == [(0, 0), (0, 88), (88, 0), (88, 88)]


def test_tile_size_zero():
    with pytest.raises(ValueError):
        list(tile(np.zeros((4, 4)), 0))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.data())
def test_tile_then_mosaic_reconstructs(h, w, data):
    size = data.draw(st.integers(1, min(h, w)))
    stride = data.draw(st.integers(1, size))
    arr = np.arange(h * w).reshape(h, w)
    chips = [(r, c, chip) for r, c, chip in tile(arr, size, stride)]
    assert np.array_equal(mosaic(chips, (h, w), fill=-1), arr)


def test_tile_typed_rasters(rng):
    img = MultiSpectralImage(rng.random((12, 10, 10)))
    chips = list(tile(img, 8, 8))
    assert all(isinstance(c, MultiSpectralImage) and c.shape == (8, 8) for _, _, c in chips)
    assert np.array_equal(chips[-1][2].bands, img.bands[:, 2:, 2:])


# -- band math --------------------------------------------------------------

def test_ndvi_values():
    assert ndvi(_image_with(NIR=0.5, Red=0.25))[0, 0] == pytest.approx(1 / 3)
    assert ndvi(_image_with(NIR=0.3, Red=0.3))[0, 0] == 0.0
    assert ndvi(_image_with(NIR=0.0, Red=0.0))[0, 0] == 0.0


def test_missing_band():
    img = MultiSpectralImage(np.zeros((4, 1, 1)), ("Blue", "Green", "Red", "NIR"))
    with pytest.raises(KeyError):
        normalized_difference(img, "SWIR1", "NIR")


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, (12, 3, 3), elements=st.floats(0, 1e6, width=32)))
def test_normalized_difference_bounded(bands):
    out = normalized_difference(MultiSpectralImage(bands), "Green", "NIR")
    assert np.all(out >= -1) and np.all(out <= 1)
