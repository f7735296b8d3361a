"""Shared numerical kernels: separable Gaussian blur, trilinear sampling,
Catmull-Rom upscaling, and 3D connected-component labeling.

These are the primitives every pipeline stage builds on, so their exact
conventions matter and are pinned here:

* Gaussian kernels are truncated at ``ceil(4 * sigma)`` taps per side and
  renormalized to sum to 1; convolution replicates edge values.
* Sigma is measured in voxels.
* Trilinear sampling addresses continuous voxel coordinates in
  ``[0, dim - 1]`` per axis.
* Component ids are assigned by first-encountered voxel in C scan order
  over ``(x, y, z)`` indices, so labelings are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import LabelVolume, ScalarVolume, SoftMask


# ---------------------------------------------------------------------------
# Gaussian blur


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps over radius ceil(4*sigma)."""
    radius = math.ceil(4.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable 3-pass Gaussian blur with edge replication."""
    if sigma < 0 or not np.isfinite(sigma):
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    if sigma == 0:
        return arr.copy()
    if np.issubdtype(arr.dtype, np.integer):
        arr = arr.astype(np.float32)
    kernel = gaussian_kernel1d(sigma)
    out = arr
    for axis in range(3):
        out = ndimage.correlate1d(out, kernel, axis=axis, mode="nearest")
    return out


def gaussian_blur(volume, sigma: float, units: str = "voxels"):
    """Blur a ScalarVolume or SoftMask; the SoftMask result is clamped to [0, 1]."""
    if units != "voxels":
        raise ValueError(f"unsupported sigma units {units!r}; only 'voxels' is implemented")
    if isinstance(volume, LabelVolume):
        raise ValueError("gaussian_blur does not apply to label volumes")
    out = blur_array(volume.data, sigma)
    if isinstance(volume, SoftMask):
        np.clip(out, 0.0, 1.0, out=out)
        return volume.with_data(out)
    if np.issubdtype(volume.data.dtype, np.integer):
        return ScalarVolume(out, volume.spacing, volume.origin, volume.affine)
    return volume.with_data(out)


# ---------------------------------------------------------------------------
# Interpolation


def trilinear_at(data: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at continuous voxel coordinates.

    ``points`` has shape (..., 3) and is clamped to the valid range, so the
    caller is responsible for bounds when clamping is not wanted.
    """
    pts = np.asarray(points, dtype=np.float64)
    return trilinear_xyz(data, pts[..., 0], pts[..., 1], pts[..., 2])


def trilinear_xyz(data: np.ndarray, px, py, pz) -> np.ndarray:
    """Trilinear interpolation with per-axis coordinate arrays.

    Skips the (..., 3) packing of :func:`trilinear_at`; math runs in the
    coordinate dtype (use float32 coordinates for bulk mask resampling).
    """
    nx, ny, nz = data.shape
    x = np.clip(px, 0.0, nx - 1.0)
    y = np.clip(py, 0.0, ny - 1.0)
    z = np.clip(pz, 0.0, nz - 1.0)

    x0 = np.minimum(np.floor(x).astype(np.int64), max(nx - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.int64), max(ny - 2, 0))
    z0 = np.minimum(np.floor(z).astype(np.int64), max(nz - 2, 0))
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)
    tx = x - x0
    ty = y - y0
    tz = z - z0

    c000 = data[x0, y0, z0]
    c100 = data[x1, y0, z0]
    c010 = data[x0, y1, z0]
    c110 = data[x1, y1, z0]
    c001 = data[x0, y0, z1]
    c101 = data[x1, y0, z1]
    c011 = data[x0, y1, z1]
    c111 = data[x1, y1, z1]

    c00 = c000 * (1 - tx) + c100 * tx
    c10 = c010 * (1 - tx) + c110 * tx
    c01 = c001 * (1 - tx) + c101 * tx
    c11 = c011 * (1 - tx) + c111 * tx
    c0 = c00 * (1 - ty) + c10 * ty
    c1 = c01 * (1 - ty) + c11 * ty
    return c0 * (1 - tz) + c1 * tz


def sample_trilinear(volume, point) -> float:
    """Sample one continuous voxel coordinate; out-of-bounds points are errors."""
    pt = np.asarray(point, dtype=np.float64)
    if pt.shape != (3,):
        raise ValueError("point must be a 3-vector of voxel coordinates")
    dims = volume.data.shape
    for axis in range(3):
        if not (0.0 <= pt[axis] <= dims[axis] - 1):
            raise ValueError(
                f"point {tuple(pt)} outside volume bounds "
                f"[0, {dims[0]-1}]x[0, {dims[1]-1}]x[0, {dims[2]-1}]"
            )
    return float(trilinear_at(volume.data, pt))


def _catmull_rom_weights(t: np.ndarray):
    t2 = t * t
    t3 = t2 * t
    w0 = -0.5 * t3 + t2 - 0.5 * t
    w1 = 1.5 * t3 - 2.5 * t2 + 1.0
    w2 = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w3 = 0.5 * t3 - 0.5 * t2
    return w0, w1, w2, w3


def _pad_linear_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """Pad two planes per side, extrapolating linearly so ramps stay exact."""
    a = np.moveaxis(arr, axis, 0)
    if a.shape[0] == 1:
        first = a[0]
        stack = [first, first, first, first, first]
        return np.moveaxis(np.stack(stack, axis=0), 0, axis)
    lo1 = 2.0 * a[0] - a[1]
    lo2 = 3.0 * a[0] - 2.0 * a[1]
    hi1 = 2.0 * a[-1] - a[-2]
    hi2 = 3.0 * a[-1] - 2.0 * a[-2]
    padded = np.concatenate([lo2[None], lo1[None], a, hi1[None], hi2[None]], axis=0)
    return np.moveaxis(padded, 0, axis)


def resample_cubic_axis(arr: np.ndarray, axis: int, scale: float) -> np.ndarray:
    """Catmull-Rom resampling along one axis to ceil(n * scale) samples."""
    n = arr.shape[axis]
    out_len = math.ceil(n * scale)
    pos = np.arange(out_len, dtype=np.float64) / scale
    base = np.floor(pos).astype(np.int64)
    t = pos - base
    w0, w1, w2, w3 = _catmull_rom_weights(t)

    padded = _pad_linear_axis(arr.astype(np.float64, copy=False), axis)
    moved = np.moveaxis(padded, axis, 0)
    # padded index of sample i is i + 2
    g = (
        moved[base + 1] * w0.reshape((-1,) + (1,) * (arr.ndim - 1))
        + moved[base + 2] * w1.reshape((-1,) + (1,) * (arr.ndim - 1))
        + moved[base + 3] * w2.reshape((-1,) + (1,) * (arr.ndim - 1))
        + moved[base + 4] * w3.reshape((-1,) + (1,) * (arr.ndim - 1))
    )
    return np.moveaxis(g, 0, axis)


def upscale_cubic_array(arr: np.ndarray, eta: float) -> np.ndarray:
    """Separable Catmull-Rom upscale by factor eta >= 1; eta == 1 is identity."""
    if eta < 1:
        raise ValueError(f"scale factor must be >= 1, got {eta}")
    if eta == 1.0:
        return arr.copy()
    out = arr
    for axis in range(3):
        out = resample_cubic_axis(out, axis, eta)
    return out.astype(arr.dtype, copy=False) if arr.dtype == np.float64 else out


# ---------------------------------------------------------------------------
# Connected components


@dataclass(frozen=True)
class ComponentSet:
    """Connected components of one label value.

    ``labels`` maps each voxel to 0 (background) or a component id in
    ``1..count``; ids follow first-encountered scan order. ``radii_mm`` are
    equivalent-sphere radii from the component volume in mm^3.
    """

    count: int
    labels: np.ndarray
    voxel_counts: np.ndarray
    radii_mm: np.ndarray
    spacing: tuple

    def component_mask(self, cid: int) -> np.ndarray:
        return self.labels == cid


_STRUCTURE_6 = ndimage.generate_binary_structure(3, 1)
_STRUCTURE_26 = np.ones((3, 3, 3), dtype=bool)


def label_components(mask: np.ndarray, spacing, connectivity: int = 26) -> ComponentSet:
    if connectivity == 6:
        structure = _STRUCTURE_6
    elif connectivity == 26:
        structure = _STRUCTURE_26
    else:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")

    labels, n = ndimage.label(mask, structure=structure)
    labels = labels.astype(np.int32)
    if n > 0:
        flat = labels.ravel()
        ids, first = np.unique(flat, return_index=True)
        fg = ids != 0
        order = np.argsort(first[fg], kind="stable")
        remap = np.zeros(n + 1, dtype=np.int32)
        remap[ids[fg][order]] = np.arange(1, n + 1, dtype=np.int32)
        labels = remap[labels]

    counts = np.bincount(labels.ravel(), minlength=n + 1)[1:].astype(np.int64)
    voxel_mm3 = float(np.prod(spacing))
    radii = np.cbrt(3.0 * counts * voxel_mm3 / (4.0 * np.pi))
    return ComponentSet(int(n), labels, counts, radii, tuple(spacing))


def connected_components(labels: LabelVolume, target: int, connectivity: int = 26) -> ComponentSet:
    """Components of ``labels == target`` under 6- or 26-connectivity."""
    if target not in (1, 2):
        raise ValueError(f"target label must be 1 or 2, got {target}")
    return label_components(labels.data == target, labels.spacing, connectivity)
