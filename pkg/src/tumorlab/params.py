"""Engine configuration, tumor size presets, and per-tumor parameter records.

Defaults follow the clinically tuned values used throughout the pipeline:
vessel threshold offset 15 HU, texture blur 0.6, edge-softness range
(0.6, 1.2), capsule blur 0.8 and brightening 120 HU, edge band (0.4, 0.7),
bulge radius factor 1.3 with intensity 30, tumor mean HU drawn from
U(30, parenchyma mean - 10), and grain scale drawn from U(1.1, 1.5).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible RNG stream for (seed, key...).

    Derivation is counter-based, so consuming one stream never shifts the
    draws of another.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class GenConfig:
    """All engine-level knobs for one synthesis run."""

    # vessel segmentation
    vessel_threshold_offset: float = 15.0          # added to the liver mean HU
    # texture
    texture_blur_sigma: float = 0.6                # voxels
    grain_scale_range: tuple = (1.1, 1.5)
    tumor_mean_hu_low: float = 30.0
    tumor_mean_hu_margin: float = 10.0             # upper bound = mu_p - margin
    # shape
    edge_softness_range: tuple = (0.6, 1.2)        # voxels
    half_axis_factors: tuple = (0.75, 1.25)        # times the preset radius
    deform_smoothing_voxels: float = 4.0
    deform_amplitude: float = 1.0                  # voxels per unit deform strength
    # post-processing
    bulge_radius_factor: float = 1.3               # times the tumor radius, in mm
    mass_intensity: float = 30.0                   # 0..100
    capsule_edge_band: tuple = (0.4, 0.7)          # (lower, upper) soft-mask bounds
    capsule_blur_sigma: float = 0.8                # voxels
    capsule_brightness_hu: float = 120.0
    enable_mass_effect: bool = True
    enable_capsule: bool = True
    # engine behavior
    max_attempts: int = 200
    label_threshold: float = 0.5
    share_tumor_mean_hu: bool = True               # one mean HU per scan (non-mix)
    core_margin_factor: float = 1.75               # tumor-tumor separation, times radius
    core_margin_voxels: int = 2

    def __post_init__(self):
        lb, ub = self.capsule_edge_band
        if not (0.0 <= lb < ub <= 1.0):
            raise ValueError(f"capsule edge band must satisfy 0 <= lb < ub <= 1, got {self.capsule_edge_band}")
        if self.capsule_brightness_hu < 0:
            raise ValueError("capsule brightness must be >= 0")
        if not (0.0 <= self.mass_intensity <= 100.0):
            raise ValueError("mass intensity must lie in [0, 100]")
        for name in ("grain_scale_range", "edge_softness_range", "half_axis_factors"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be a non-empty positive range")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def tumor_mean_hu_range(self, parenchyma_mean: float) -> tuple:
        low = self.tumor_mean_hu_low
        high = parenchyma_mean - self.tumor_mean_hu_margin
        if high <= low:
            warnings.warn(
                f"parenchyma mean {parenchyma_mean:.1f} HU leaves no room above "
                f"{low} HU; tumor mean HU pinned to {low}"
            )
            high = low
        return (low, high)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "GenConfig":
        return cls.from_dict(json.loads(text))

    def updated(self, **kwargs) -> "GenConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class SizePreset:
    """One tumor-size sampling regime: radius, deformation range, count range."""

    name: str
    radius_mm: float
    deform_range: tuple    # uniform bounds for the elastic deformation strength
    count_range: tuple     # inclusive integer bounds for tumors per scan

    def draw_count(self, rng) -> int:
        lo, hi = self.count_range
        return int(rng.integers(lo, hi + 1))

    def draw_deform(self, rng) -> float:
        lo, hi = self.deform_range
        return float(rng.uniform(lo, hi))


PRESETS = {
    "tiny": SizePreset("tiny", 4.0, (0.5, 1.0), (3, 10)),
    "small": SizePreset("small", 8.0, (1.0, 2.0), (3, 10)),
    "medium": SizePreset("medium", 16.0, (3.0, 6.0), (2, 5)),
    "large": SizePreset("large", 32.0, (5.0, 10.0), (1, 3)),
}
SIZED_PRESET_NAMES = ("tiny", "small", "medium", "large")
PRESET_NAMES = SIZED_PRESET_NAMES + ("mix",)


def resolve_preset(name: str, rng) -> SizePreset:
    """Resolve a preset name; "mix" picks one sized preset uniformly."""
    if name == "mix":
        return PRESETS[SIZED_PRESET_NAMES[int(rng.integers(len(SIZED_PRESET_NAMES)))]]
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None


@dataclass
class TumorSpec:
    """One tumor's parameters. Unset (None) fields are sampled at run time."""

    index: int = 0
    preset: str = ""
    center: tuple | None = None          # integer voxel coordinates
    radius_mm: float | None = None
    half_axes_mm: tuple | None = None
    mean_hu: float | None = None
    grain_scale: float | None = None
    edge_softness: float | None = None
    deform_strength: float | None = None
    texture_sigma_scale: float = 1.0
    mass_intensity: float | None = None  # None -> config value
    capsule: bool | None = None          # None -> config flag
    mass_effect: bool | None = None      # None -> config flag
    attempts: int = 0

    def validate(self, cfg: GenConfig, parenchyma_mean: float | None = None):
        if self.radius_mm is not None and self.radius_mm <= 0:
            raise ValueError(f"tumor {self.index}: radius must be > 0")
        if self.half_axes_mm is not None:
            if len(self.half_axes_mm) != 3 or any(a <= 0 for a in self.half_axes_mm):
                raise ValueError(f"tumor {self.index}: half axes must be three positive lengths")
        if self.grain_scale is not None and self.grain_scale < 1.0:
            raise ValueError(f"tumor {self.index}: grain scale must be >= 1")
        if self.edge_softness is not None and self.edge_softness <= 0:
            raise ValueError(f"tumor {self.index}: edge softness must be > 0")
        if self.deform_strength is not None and self.deform_strength < 0:
            raise ValueError(f"tumor {self.index}: deformation strength must be >= 0")
        if self.mass_intensity is not None and not (0 <= self.mass_intensity <= 100):
            raise ValueError(f"tumor {self.index}: mass intensity must lie in [0, 100]")
        if self.texture_sigma_scale < 0:
            raise ValueError(f"tumor {self.index}: texture sigma scale must be >= 0")
        if (
            self.mean_hu is not None
            and parenchyma_mean is not None
            and self.mean_hu > parenchyma_mean - cfg.tumor_mean_hu_margin
        ):
            warnings.warn(
                f"tumor {self.index}: mean HU {self.mean_hu:.1f} above the sampling "
                f"default upper bound {parenchyma_mean - cfg.tumor_mean_hu_margin:.1f}; "
                "accepted (the range is a default, not a hard bound)"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("center", "half_axes_mm"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TumorSpec":
        d = dict(d)
        for k in ("center", "half_axes_mm"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)
