"""Fuel-class taxonomy shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass

UNLABELED = 255


@dataclass(frozen=True)
class FuelClass:
    id: int
    name: str
    color: tuple[int, int, int]


FUEL_CLASSES: tuple[FuelClass, ...] = (
    FuelClass(0, "Artificial", (214, 58, 61)),
    FuelClass(1, "Bare", (154, 154, 154)),
    FuelClass(2, "Wetlands", (150, 107, 196)),
    FuelClass(3, "Water", (43, 80, 198)),
    FuelClass(4, "Grassland", (249, 159, 39)),
    FuelClass(5, "Agricultural", (253, 211, 39)),
    FuelClass(6, "Broadleaves", (36, 152, 1)),
    FuelClass(7, "Coniferous", (8, 98, 0)),
    FuelClass(8, "Shrubs", (141, 140, 0)),
    FuelClass(9, "Ignored", (44, 44, 44)),
)

ARTIFICIAL = 0
BARE = 1
WETLANDS = 2
WATER = 3
GRASSLAND = 4
AGRICULTURAL = 5
BROADLEAVES = 6
CONIFEROUS = 7
SHRUBS = 8
IGNORED = 9

# classes the network predicts; Ignored never enters a loss or a metric
NUM_CLASSES = 9
CLASS_NAMES = tuple(c.name for c in FUEL_CLASSES)
FOREST = (BROADLEAVES, CONIFEROUS)


def class_by_name(name: str) -> FuelClass:
    for c in FUEL_CLASSES:
        if c.name.lower() == name.lower():
            return c
    raise KeyError(f"unknown fuel class {name!r}")


def is_valid_label(value: int) -> bool:
    return value == UNLABELED or 0 <= value <= IGNORED
