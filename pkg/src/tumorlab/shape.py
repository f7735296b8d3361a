"""Tumor shape generation: ellipsoids, elastic deformation, edge softening.

A tumor starts as a random ellipsoid (half-axes drawn around the nominal
radius), gets warped by a smoothed random displacement field to break the
ideal geometry, and is finally blurred so the mask edge fades smoothly into
the surrounding tissue. Shapes keep a single connected component: if the
deformation pinches a piece off, only the largest part survives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .kernels import blur_array, gaussian_kernel1d, trilinear_xyz
from .volume import SoftMask

DEFORM_SMOOTHING_VOXELS = 4.0
DEFORM_AMPLITUDE = 1.0  # displacement voxels per unit deformation strength


@dataclass(frozen=True)
class ShapeParams:
    center: tuple                 # voxel coordinates in the full volume
    radius_mm: float
    half_axes_mm: tuple           # three lengths in mm
    deform_strength: float = 0.0
    edge_softness: float = 0.8    # blur sigma in voxels

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ValueError("radius must be > 0")
        if len(self.half_axes_mm) != 3 or any(a <= 0 for a in self.half_axes_mm):
            raise ValueError("half axes must be three positive lengths")
        if self.deform_strength < 0:
            raise ValueError("deformation strength must be >= 0")
        if self.edge_softness <= 0:
            raise ValueError("edge softness must be > 0")


def ellipsoid_array(center, half_axes_mm, dims, spacing, offset=(0, 0, 0)) -> np.ndarray:
    """Binary ellipsoid on a grid; ``offset`` places a sub-box inside a larger volume.

    A voxel is inside when sum(((p_i - c_i) * spacing_i / a_i)^2) <= 1 with
    half-axes in mm. Out-of-volume parts are simply clipped by the grid.
    """
    dims = tuple(int(d) for d in dims)
    axes = []
    for i in range(3):
        coords = (np.arange(offset[i], offset[i] + dims[i], dtype=np.float64) - center[i]) * spacing[i]
        axes.append(coords / half_axes_mm[i])
    gx, gy, gz = np.meshgrid(*axes, indexing="ij", sparse=True)
    return (gx * gx + gy * gy + gz * gz) <= 1.0


def ellipsoid_mask(params: ShapeParams, dims, spacing, offset=(0, 0, 0)) -> SoftMask:
    inside = ellipsoid_array(params.center, params.half_axes_mm, dims, spacing, offset)
    return SoftMask(inside.astype(np.float32), tuple(spacing))


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(mask, structure=np.ones((3, 3, 3), dtype=bool))
    if n <= 1:
        return mask
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == int(counts.argmax())


def deform_array(
    mask: np.ndarray,
    strength: float,
    rng: np.random.Generator,
    smoothing: float = DEFORM_SMOOTHING_VOXELS,
    amplitude: float = DEFORM_AMPLITUDE,
) -> np.ndarray:
    """Warp a binary mask through a smoothed random displacement field.

    The field is U(-1, 1) per voxel and channel, Gaussian-smoothed with the
    given sigma, and scaled to ``amplitude * strength`` voxels. Because the
    smoothed field is a convex combination of the raw draws, displacements
    are hard-bounded by that amplitude. The mask is resampled through the
    displacement (output voxel x reads input at x + d(x)) and re-binarized
    at 0.5.
    """
    if strength < 0:
        raise ValueError("deformation strength must be >= 0")
    if strength == 0:
        return mask.copy()

    shape = mask.shape
    disp = rng.uniform(-1.0, 1.0, size=(3,) + shape).astype(np.float32)
    kernel = gaussian_kernel1d(smoothing)
    for axis in (1, 2, 3):  # smooth all three channels in one pass per axis
        disp = ndimage.correlate1d(disp, kernel, axis=axis, mode="nearest")
    disp *= np.float32(amplitude * strength)

    gx, gy, gz = np.meshgrid(*(np.arange(n, dtype=np.float32) for n in shape),
                             indexing="ij", sparse=True)
    warped = trilinear_xyz(mask.astype(np.float32),
                           gx + disp[0], gy + disp[1], gz + disp[2])
    binary = warped >= 0.5
    return _largest_component(binary)


def elastic_deform(mask: SoftMask, strength: float, rng: np.random.Generator) -> SoftMask:
    out = deform_array(mask.data >= 0.5, strength, rng)
    return mask.with_data(out.astype(np.float32))


def soft_edge(mask: SoftMask, edge_softness: float) -> SoftMask:
    """Blur a binary mask so the boundary ramps smoothly from 1 to 0."""
    if edge_softness <= 0:
        raise ValueError("edge softness must be > 0")
    out = blur_array(mask.data.astype(np.float32, copy=False), edge_softness)
    np.clip(out, 0.0, 1.0, out=out)
    return mask.with_data(out)
