"""Dense 3D volume containers.

All grids are stored as numpy arrays of shape ``(nx, ny, nz)`` indexed
``data[x, y, z]``; the x axis varies fastest on disk (NIfTI convention).
Volumes are treated as immutable: every operation in this package returns
a new volume and never writes through a volume it received.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryMismatchError


def _check_geometry(data, spacing, origin):
    if not isinstance(data, np.ndarray) or data.ndim != 3:
        raise ValueError("volume data must be a 3D numpy array")
    if min(data.shape) < 1:
        raise ValueError("volume dims must be positive")
    if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise ValueError(f"spacing must be three positive reals, got {spacing}")
    if len(origin) != 3 or any(not np.isfinite(o) for o in origin):
        raise ValueError(f"origin must be three finite reals, got {origin}")


@dataclass(frozen=True)
class ScalarVolume:
    """3D scalar grid of HU values (or dimensionless after processing)."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    affine: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        _check_geometry(self.data, self.spacing, self.origin)
        if np.issubdtype(self.data.dtype, np.floating) and not np.isfinite(self.data).all():
            raise ValueError("scalar volume contains non-finite values")

    @property
    def dims(self):
        return self.data.shape

    def with_data(self, data) -> "ScalarVolume":
        """New volume with the same geometry and different data."""
        return ScalarVolume(data, self.spacing, self.origin, self.affine)

    def copy(self) -> "ScalarVolume":
        return self.with_data(self.data.copy())


@dataclass(frozen=True)
class LabelVolume:
    """3D integer grid with values 0 (background), 1 (liver), 2 (tumor)."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    affine: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        _check_geometry(self.data, self.spacing, self.origin)
        if not np.issubdtype(self.data.dtype, np.integer):
            raise ValueError("label volume data must be integer-typed")
        if self.data.size and (self.data.min() < 0 or self.data.max() > 2):
            raise ValueError("label values must lie in {0, 1, 2}")

    @property
    def dims(self):
        return self.data.shape

    def with_data(self, data) -> "LabelVolume":
        return LabelVolume(data, self.spacing, self.origin, self.affine)

    def copy(self) -> "LabelVolume":
        return self.with_data(self.data.copy())


@dataclass(frozen=True)
class SoftMask:
    """3D grid of reals in [0, 1] (blurred shapes, edge fields, vessel masks)."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    affine: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        _check_geometry(self.data, self.spacing, self.origin)
        if not np.issubdtype(self.data.dtype, np.floating):
            raise ValueError("soft mask data must be float-typed")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("soft mask values must lie in [0, 1]")

    @property
    def dims(self):
        return self.data.shape

    def with_data(self, data) -> "SoftMask":
        return SoftMask(data, self.spacing, self.origin, self.affine)

    def copy(self) -> "SoftMask":
        return self.with_data(self.data.copy())


Volume = ScalarVolume | LabelVolume | SoftMask


def same_geometry(a, b) -> bool:
    return a.data.shape == b.data.shape and tuple(a.spacing) == tuple(b.spacing)


def require_same_geometry(a, b, what="volumes"):
    if not same_geometry(a, b):
        raise GeometryMismatchError(
            f"{what} must share dims and spacing: "
            f"{a.data.shape}/{tuple(a.spacing)} vs {b.data.shape}/{tuple(b.spacing)}"
        )
