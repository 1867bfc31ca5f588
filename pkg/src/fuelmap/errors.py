class FuelMapError(Exception):
    """Base class for errors raised by fuelmap."""


class RasterFormatError(FuelMapError, ValueError):
    """Malformed raster header or payload."""


class RasterValueError(FuelMapError, ValueError):
    """A raster violates its value invariants (non-finite data, bad class id, ...)."""


class ShapeMismatchError(FuelMapError, ValueError):
    pass


class UnmappedClassError(FuelMapError, KeyError):
    """Source class id with no entry in the class mapping."""

    def __init__(self, ids: dict[int, int]):
        self.ids = dict(ids)
        detail = ", ".join(f"{k} ({v} px)" for k, v in sorted(self.ids.items()))
        super().__init__(f"unmapped source class ids: {detail}")

    def __str__(self) -> str:
        return self.args[0]


class PointConflictError(FuelMapError, ValueError):
    pass


class StaleCacheError(FuelMapError, RuntimeError):
    """A backward pass was given a cache that no longer matches the model."""
