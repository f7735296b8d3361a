"""Hepatic parenchyma statistics and vessel segmentation.

Vessels are segmented by thresholding a smoothed copy of the CT at the
liver mean plus a fixed offset; smoothing strength scales with the
parenchyma noise level (``sigma = 0.5 + 0.025 * sigma_p``). Parenchyma
statistics are estimated in two passes: liver-wide first, then recomputed
with the provisional vessel voxels excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import blur_array
from .params import GenConfig
from .volume import LabelVolume, ScalarVolume, SoftMask, require_same_geometry


@dataclass(frozen=True)
class ParenchymaStats:
    """Mean/std of the hepatic parenchyma (liver excluding vessels).

    ``liver_mean``/``liver_std`` are the pass-1 statistics over the whole
    liver including vessels; the threshold for vessel segmentation is
    defined against ``liver_mean``.
    """

    mu_p: float
    sigma_p: float
    voxel_count: int
    liver_mean: float
    liver_std: float

    def __post_init__(self):
        if self.sigma_p < 0 or self.voxel_count <= 0:
            raise ValueError("invalid parenchyma statistics")


def smoothing_sigma(sigma_p: float) -> float:
    return 0.5 + 0.025 * sigma_p


def _liver_bbox(liver_data, margin):
    idx = np.nonzero(liver_data == 1)
    if idx[0].size == 0:
        raise ValueError("liver mask is empty")
    slices = []
    for axis in range(3):
        lo = max(int(idx[axis].min()) - margin, 0)
        hi = min(int(idx[axis].max()) + margin + 1, liver_data.shape[axis])
        slices.append(slice(lo, hi))
    return tuple(slices)


def _smoothed_over_threshold(ct_data, liver_data, sigma, threshold):
    """Boolean vessel candidates: smoothed CT > threshold, restricted to liver.

    The blur runs on the liver bounding box padded by the kernel radius, which
    is exact for every liver voxel and much cheaper than a whole-scan pass.
    """
    margin = int(np.ceil(4.0 * sigma))
    box = _liver_bbox(liver_data, margin)
    smoothed = blur_array(ct_data[box].astype(np.float32, copy=False), sigma)
    out = np.zeros(ct_data.shape, dtype=bool)
    out[box] = smoothed > threshold
    out &= liver_data == 1
    return out


def estimate_parenchyma_stats(ct: ScalarVolume, liver: LabelVolume, cfg: GenConfig | None = None) -> ParenchymaStats:
    """Two-pass parenchyma estimate: liver-wide, then vessel-excluded."""
    cfg = cfg or GenConfig()
    require_same_geometry(ct, liver, "ct and liver mask")
    inside = liver.data == 1
    if not inside.any():
        raise ValueError("liver mask is empty")

    liver_values = ct.data[inside].astype(np.float64)
    mu1 = float(liver_values.mean())
    sd1 = float(liver_values.std())

    candidates = _smoothed_over_threshold(
        ct.data, liver.data, smoothing_sigma(sd1), mu1 + cfg.vessel_threshold_offset
    )
    clean = inside & ~candidates
    if not clean.any():
        clean = inside  # degenerate phantom: everything thresholded out
    clean_values = ct.data[clean].astype(np.float64)
    return ParenchymaStats(
        mu_p=float(clean_values.mean()),
        sigma_p=float(clean_values.std()),
        voxel_count=int(clean.sum()),
        liver_mean=mu1,
        liver_std=sd1,
    )


def segment_vessels(ct: ScalarVolume, liver: LabelVolume, stats: ParenchymaStats, cfg: GenConfig | None = None) -> SoftMask:
    """Binary vessel mask: smoothed CT above the liver mean plus offset, inside the liver."""
    cfg = cfg or GenConfig()
    require_same_geometry(ct, liver, "ct and liver mask")
    vessels = _smoothed_over_threshold(
        ct.data,
        liver.data,
        smoothing_sigma(stats.sigma_p),
        stats.liver_mean + cfg.vessel_threshold_offset,
    )
    return SoftMask(vessels.astype(np.float32), ct.spacing, ct.origin, ct.affine)
