"""Compose a tumor into the scan: soft blend, bulge warp, capsule rim.

The blend is the convex combination ``(1 - t) * scan + t * texture`` driven
by the soft shape mask; labels flip to tumor where the mask clears the
binarization threshold inside the liver. The bulge warp radially stretches
a ball around the tumor so surrounding tissue appears pushed outward, and
the capsule step brightens a blurred band of the mask edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import blur_array, trilinear_at
from .volume import LabelVolume, ScalarVolume, SoftMask, require_same_geometry


@dataclass(frozen=True)
class CapsuleParams:
    edge_band: tuple = (0.4, 0.7)   # soft-mask interval treated as "edge"
    blur_sigma: float = 0.8         # voxels
    brightness_hu: float = 120.0

    def __post_init__(self):
        lb, ub = self.edge_band
        if not (0.0 <= lb < ub <= 1.0):
            raise ValueError(f"edge band must satisfy 0 <= lb < ub <= 1, got {self.edge_band}")
        if self.brightness_hu < 0:
            raise ValueError("capsule brightness must be >= 0")


@dataclass(frozen=True)
class BulgeParams:
    center: tuple                   # voxel coordinates
    radius_mm: float                # radius of the affected ball
    intensity: float = 30.0         # 0..100; 0 = identity

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ValueError("bulge radius must be > 0")
        if not (0.0 <= self.intensity <= 100.0):
            raise ValueError(f"bulge intensity must lie in [0, 100], got {self.intensity}")


# ---------------------------------------------------------------------------
# Blend


def blend_arrays(scan, labels, soft, texture, threshold=0.5):
    """In-place blend on plain arrays (used on bounding-box views)."""
    np.multiply(texture, soft, out=texture)
    scan *= 1.0 - soft
    scan += texture
    labels[(soft >= threshold) & (labels == 1)] = 2


def blend_tumor(ct: ScalarVolume, labels: LabelVolume, soft: SoftMask, texture: ScalarVolume, threshold: float = 0.5):
    """Blend a texture into the scan through a soft mask.

    Returns ``(new_ct, new_labels)``; voxels where the mask reaches the
    threshold and were liver become tumor.
    """
    require_same_geometry(ct, labels, "ct and labels")
    require_same_geometry(ct, soft, "ct and soft mask")
    require_same_geometry(ct, texture, "ct and texture")
    f = ct.data.astype(np.float64 if ct.data.dtype == np.float64 else np.float32, copy=True)
    lab = labels.data.copy()
    blend_arrays(f, lab, soft.data.astype(f.dtype), texture.data.astype(f.dtype, copy=True), threshold)
    return ct.with_data(f), labels.with_data(lab)


# ---------------------------------------------------------------------------
# Bulge (mass-effect) warp


def _bulge_box(center, radius_mm, spacing, dims):
    slices = []
    for c, s, n in zip(center, spacing, dims):
        r = int(np.ceil(radius_mm / s))
        slices.append(slice(max(0, int(c) - r), min(n, int(c) + r + 1)))
    return tuple(slices)


def bulge_warp_arrays(scan, labels, center, radius_mm, intensity, spacing):
    """Radially remap a ball so content shifts outward; mutates both arrays.

    Each output voxel at distance g < radius from the center reads its value
    from the same ray at distance g * (1 - (1 - g/radius)^2 * intensity/100),
    which is closer to the center, so the tumor appears to push tissue apart.
    Scalars are sampled trilinearly, labels nearest-neighbor. Voxels at or
    beyond the radius never change.
    """
    if intensity == 0:
        return
    box = _bulge_box(center, radius_mm, spacing, scan.shape)
    coords = np.meshgrid(
        *(np.arange(s.start, s.stop, dtype=np.float64) for s in box), indexing="ij"
    )
    delta = [coords[i] - center[i] for i in range(3)]
    gamma = np.sqrt(sum((delta[i] * spacing[i]) ** 2 for i in range(3)))
    inside = (gamma < radius_mm) & (gamma > 0)
    if not inside.any():
        return

    u = gamma[inside] / radius_mm
    shrink = 1.0 - (1.0 - u) ** 2 * (intensity / 100.0)
    src = np.stack(
        [center[i] + delta[i][inside] * shrink for i in range(3)], axis=-1
    )

    scan_box = scan[box]
    vals = trilinear_at(scan, src).astype(scan.dtype)
    region = scan_box.copy()
    region[inside] = vals
    scan[box] = region

    nn = [np.clip(np.rint(src[:, i]).astype(np.int64), 0, scan.shape[i] - 1) for i in range(3)]
    lab_box = labels[box].copy()
    lab_box[inside] = labels[nn[0], nn[1], nn[2]]
    labels[box] = lab_box


def mass_effect_warp(ct: ScalarVolume, labels: LabelVolume, p: BulgeParams):
    """Apply the bulge warp; ``intensity == 0`` returns bit-identical copies."""
    require_same_geometry(ct, labels, "ct and labels")
    f = ct.data.copy()
    lab = labels.data.copy()
    if p.intensity != 0:
        bulge_warp_arrays(f, lab, p.center, p.radius_mm, p.intensity, ct.spacing)
    return ct.with_data(f), labels.with_data(lab)


def bulge_source_distance(gamma, radius_mm, intensity):
    """Source distance for an output point at distance ``gamma`` from the center."""
    g = np.asarray(gamma, dtype=np.float64)
    return (1.0 - (1.0 - g / radius_mm) ** 2 * (intensity / 100.0)) * g


# ---------------------------------------------------------------------------
# Capsule


def capsule_arrays(scan, soft, params: CapsuleParams):
    """Brighten the blurred mask-edge band in place."""
    lb, ub = params.edge_band
    edge = ((soft >= lb) & (soft <= ub)).astype(scan.dtype)
    rim = blur_array(edge, params.blur_sigma)
    scan += params.brightness_hu * rim


def apply_capsule(ct: ScalarVolume, soft: SoftMask, params: CapsuleParams) -> ScalarVolume:
    """Add a bright capsule rim where the soft mask passes through the edge band."""
    require_same_geometry(ct, soft, "ct and soft mask")
    f = ct.data.astype(np.float64 if ct.data.dtype == np.float64 else np.float32, copy=True)
    capsule_arrays(f, soft.data, params)
    return ct.with_data(f)
