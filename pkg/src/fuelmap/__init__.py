"""Fuel-map segmentation from sparse annotations: label engineering, EMA-teacher self-training, evaluation."""

from fuelmap.classes import FUEL_CLASSES, NUM_CLASSES, UNLABELED, FuelClass
from fuelmap.raster import LabelRaster, MultiSpectralImage, ProbabilityMap, WeightMap, read_raster, write_raster

__version__ = "0.1.0"

__all__ = [
    "FUEL_CLASSES",
    "FuelClass",
    "LabelRaster",
    "MultiSpectralImage",
    "NUM_CLASSES",
    "ProbabilityMap",
    "UNLABELED",
    "WeightMap",
    "read_raster",
    "write_raster",
]
