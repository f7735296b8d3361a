"""Synthetic CT phantoms for tests, demos, and reader-study fixtures.

A phantom is a box-shaped "liver" of roughly uniform parenchyma embedded in
darker background, optionally with smooth low-frequency HU variation (so the
parenchyma std is nonzero without tripping the vessel threshold) and bright
rods standing in for vessels.
"""

from __future__ import annotations

import numpy as np

from .volume import LabelVolume, ScalarVolume


def make_phantom(
    dims=(64, 64, 64),
    spacing=(1.0, 1.0, 1.0),
    liver_margin: int = 6,
    parenchyma_hu: float = 100.0,
    background_hu: float = -80.0,
    wave_hu: float = 5.0,
    noise_hu: float = 0.0,
    seed: int = 0,
):
    """Box liver with smooth HU variation. Returns (ct, liver_labels)."""
    dims = tuple(int(d) for d in dims)
    ct = np.full(dims, background_hu, dtype=np.float32)
    liver = np.zeros(dims, dtype=np.uint8)

    m = liver_margin
    box = tuple(slice(m, n - m) for n in dims)
    liver[box] = 1

    ct[box] = parenchyma_hu
    if wave_hu:
        x, y, z = np.meshgrid(*(np.arange(n, dtype=np.float32) for n in dims),
                              indexing="ij", sparse=True)
        waves = (
            np.sin(2 * np.pi * x / 37.0)
            + np.sin(2 * np.pi * y / 29.0)
            + np.sin(2 * np.pi * z / 23.0)
        ) / 3.0
        ct = np.where(liver == 1, ct + wave_hu * waves, ct).astype(np.float32)
    if noise_hu:
        rng = np.random.default_rng(seed)
        ct = (ct + rng.normal(0.0, noise_hu, size=dims)).astype(np.float32)

    return ScalarVolume(ct, spacing), LabelVolume(liver, spacing)


def add_rod(ct: ScalarVolume, liver: LabelVolume, axis: int, offset: tuple,
            radius_voxels: float, hu: float = 200.0):
    """Paint a bright rod along one axis; returns (new_ct, rod_mask_bool).

    ``offset`` gives the rod's center on the two axes perpendicular to
    ``axis``. The rod is clipped to the liver.
    """
    dims = ct.data.shape
    other = [a for a in range(3) if a != axis]
    coords = np.meshgrid(*(np.arange(dims[a], dtype=np.float32) for a in other),
                         indexing="ij", sparse=True)
    d2 = (coords[0] - offset[0]) ** 2 + (coords[1] - offset[1]) ** 2
    disk = d2 <= radius_voxels**2

    rod = np.zeros(dims, dtype=bool)
    mover = np.moveaxis(rod, axis, 2)
    mover[..., :] = disk[..., None]
    rod &= liver.data == 1

    data = ct.data.copy()
    data[rod] = hu
    return ct.with_data(data), rod
