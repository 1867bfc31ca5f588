import numpy as np
import pytest

from fuelmap.raster import SENTINEL2_BANDS, MultiSpectralImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_image(rng, h=16, w=16, bands=12):
    return MultiSpectralImage(rng.random((bands, h, w)).astype(np.float32), SENTINEL2_BANDS[:bands])


@pytest.fixture
def image(rng):
    return make_image(rng)
