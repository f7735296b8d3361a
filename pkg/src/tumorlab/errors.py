"""Exception types shared across the toolkit."""


class TumorLabError(Exception):
    """Base class for toolkit-specific failures."""


class NiftiFormatError(TumorLabError):
    """File is not a well-formed NIfTI-1 single-file volume."""


class UnsupportedDatatypeError(TumorLabError):
    """NIfTI datatype code outside the supported set."""


class GeometryMismatchError(TumorLabError, ValueError):
    """Two volumes that must share a grid do not."""


class PlacementError(TumorLabError):
    """No collision-free tumor location found within the attempt budget."""

    def __init__(self, attempts, radius_mm):
        self.attempts = attempts
        self.radius_mm = radius_mm
        super().__init__(
            f"no collision-free location after {attempts} attempts "
            f"(radius {radius_mm} mm)"
        )


class CollisionError(TumorLabError):
    """A pinned tumor center collides with the vessel mask."""

    def __init__(self, tumor_index):
        self.tumor_index = tumor_index
        super().__init__(f"pinned center of tumor {tumor_index} collides with vessels")


class SynthesisError(TumorLabError):
    """A synthesis run implanted no tumors at all."""


class EvaluationError(TumorLabError):
    """Grid evaluation could not be completed."""

    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class UndefinedMetricsError(TumorLabError):
    """Requested metrics are undefined (e.g. no definite reader answers)."""
