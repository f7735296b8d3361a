"""Tumor center sampling inside the liver with vessel collision avoidance.

Candidate centers are drawn uniformly over liver voxels. A candidate is
accepted when the axis-aligned box spanning the tumor radius (converted to
per-axis voxel radii, clipped to the volume) contains no vessel voxel; the
draw repeats until success or the attempt budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PlacementError
from .volume import LabelVolume, SoftMask


@dataclass(frozen=True)
class PlacementRequest:
    radius_mm: float
    max_attempts: int = 200

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ValueError("tumor radius must be > 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def voxel_radii(radius_mm: float, spacing) -> tuple:
    """Per-axis voxel radii honoring anisotropic spacing: ceil(r / spacing)."""
    return tuple(int(np.ceil(radius_mm / s)) for s in spacing)


def _box(center, radii, dims):
    return tuple(
        slice(max(0, c - r), min(n, c + r + 1))
        for c, r, n in zip(center, radii, dims)
    )


def collision_free(vessels, center, radii_voxels) -> bool:
    """True iff the clipped box around ``center`` contains no vessel voxel."""
    data = vessels.data if isinstance(vessels, SoftMask) else vessels
    dims = data.shape
    for c, n in zip(center, dims):
        if not (0 <= c < n):
            raise ValueError(f"center {tuple(center)} outside volume {dims}")
    box = _box(tuple(int(c) for c in center), radii_voxels, dims)
    region = data[box]
    return not bool((region > 0).any() if region.dtype != bool else region.any())


def liver_voxel_indices(liver: LabelVolume) -> np.ndarray:
    """Flat indices (C order) of liver voxels; cache when placing many tumors."""
    return np.flatnonzero(liver.data == 1)


def sample_location(
    liver: LabelVolume,
    vessels: SoftMask | np.ndarray | None,
    req: PlacementRequest,
    rng: np.random.Generator,
    blocked: np.ndarray | None = None,
    blocked_radii: tuple | None = None,
    liver_indices: np.ndarray | None = None,
):
    """Draw a collision-free tumor center.

    Returns ``(center, attempts)``. ``blocked``/``blocked_radii`` optionally
    add a second exclusion mask checked with its own (typically larger) box,
    used to keep already-placed tumors separated.

    Raises PlacementError when no valid center is found within the budget.
    """
    indices = liver_indices if liver_indices is not None else liver_voxel_indices(liver)
    if indices.size == 0:
        raise ValueError("liver mask is empty")

    vessel_data = None
    if vessels is not None:
        vessel_data = vessels.data if isinstance(vessels, SoftMask) else vessels
    radii = voxel_radii(req.radius_mm, liver.spacing)
    dims = liver.data.shape

    for attempt in range(1, req.max_attempts + 1):
        flat = int(indices[int(rng.integers(indices.size))])
        center = np.unravel_index(flat, dims)
        if vessel_data is not None and not collision_free(vessel_data, center, radii):
            continue
        if blocked is not None and not collision_free(blocked, center, blocked_radii or radii):
            continue
        return tuple(int(c) for c in center), attempt

    raise PlacementError(req.max_attempts, req.radius_mm)
