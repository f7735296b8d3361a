"""Tumor texture fields: Gaussian noise, cubic upscaling, smoothing.

The texture pipeline draws i.i.d. Gaussian noise at a reduced resolution,
upscales it by the grain scale with Catmull-Rom interpolation (larger
scale = coarser grain), center-crops to the requested block, and finishes
with a small Gaussian blur that mimics tomographic reconstruction.
Texture blocks live in voxel space (unit spacing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import blur_array, upscale_cubic_array
from .volume import ScalarVolume


@dataclass(frozen=True)
class TextureParams:
    mean_hu: float
    sigma_hu: float          # parenchyma standard deviation
    grain_scale: float = 1.0  # >= 1; larger = coarser grain
    blur_sigma: float = 0.6   # voxels

    def __post_init__(self):
        if self.grain_scale < 1.0:
            raise ValueError(f"grain scale must be >= 1, got {self.grain_scale}")
        if self.blur_sigma < 0:
            raise ValueError("blur sigma must be >= 0")
        if self.sigma_hu < 0:
            raise ValueError("noise sigma must be >= 0")


def generate_noise(dims, params: TextureParams, rng: np.random.Generator) -> ScalarVolume:
    """i.i.d. N(mean_hu, sigma_hu^2) samples on the given grid."""
    dims = tuple(int(d) for d in dims)
    if min(dims) < 1:
        raise ValueError("noise dims must be positive")
    data = rng.normal(params.mean_hu, params.sigma_hu, size=dims)
    return ScalarVolume(data)


def upscale_cubic(field: ScalarVolume, eta: float) -> ScalarVolume:
    """Scale a field up by eta per axis with separable cubic interpolation."""
    return ScalarVolume(upscale_cubic_array(field.data, eta))


def _center_crop(arr: np.ndarray, dims) -> np.ndarray:
    slices = []
    for n, want in zip(arr.shape, dims):
        off = (n - want) // 2
        slices.append(slice(off, off + want))
    return arr[tuple(slices)]


def generate_texture(dims_out, params: TextureParams, rng: np.random.Generator) -> ScalarVolume:
    """Full texture block: noise at dims/eta -> cubic upscale -> crop -> blur."""
    dims_out = tuple(int(d) for d in dims_out)
    eta = params.grain_scale
    dims_small = tuple(max(2, math.ceil(d / eta)) for d in dims_out)
    noise = generate_noise(dims_small, params, rng)
    up = upscale_cubic_array(noise.data, eta)
    cropped = _center_crop(up, dims_out)
    return ScalarVolume(blur_array(cropped, params.blur_sigma))


def lag1_autocorrelation(arr: np.ndarray) -> float:
    """Mean voxel-to-voxel lag-1 Pearson correlation across the three axes."""
    arr = np.asarray(arr, dtype=np.float64)
    corrs = []
    for axis in range(3):
        a = np.moveaxis(arr, axis, 0)
        x = a[:-1].ravel()
        y = a[1:].ravel()
        x = x - x.mean()
        y = y - y.mean()
        denom = np.sqrt((x * x).sum() * (y * y).sum())
        if denom == 0:
            corrs.append(0.0)
        else:
            corrs.append(float((x * y).sum() / denom))
    return float(np.mean(corrs))
