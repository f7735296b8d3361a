"""Full synthesis pipeline: sample tumors per preset and implant them.

For one scan the engine segments vessels once, draws the tumor count and
per-tumor parameters for the chosen size preset, then implants tumors
sequentially (placement -> shape -> texture -> blend -> bulge -> capsule)
into the evolving volume. Every random draw comes from a purpose-specific
substream keyed by the root seed and the tumor index, so a skipped
placement never shifts later tumors' draws and a recorded run replays
bit-exactly.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .composite import (
    BulgeParams,
    CapsuleParams,
    blend_arrays,
    bulge_warp_arrays,
    capsule_arrays,
)
from .errors import CollisionError, PlacementError, SynthesisError
from .params import GenConfig, PRESETS, TumorSpec, resolve_preset, substream
from .placement import (
    PlacementRequest,
    collision_free,
    liver_voxel_indices,
    sample_location,
    voxel_radii,
)
from .shape import deform_array, ellipsoid_array
from .kernels import blur_array
from .texture import TextureParams, generate_texture
from .vessels import ParenchymaStats, estimate_parenchyma_stats, segment_vessels
from .volume import LabelVolume, ScalarVolume, SoftMask, require_same_geometry

# substream roles under (seed, 1, tumor_index, ...)
_STREAM_PARAMS = 0
_STREAM_PLACEMENT = 1
_STREAM_DEFORM = 2
_STREAM_NOISE = 3


@dataclass
class TumorResult:
    """Everything known about one implanted tumor, for inspection and tests."""

    spec: TumorSpec
    box: tuple                 # slices of the blend bounding box
    soft_mask: np.ndarray      # the soft shape mask on that box


@dataclass
class ProvenanceRecord:
    """Replayable record of a synthesis run."""

    scan_id: str
    seed: int
    preset: str
    resolved_preset: str
    config: dict
    tumors: list = field(default_factory=list)     # TumorSpec, implanted only
    skipped: list = field(default_factory=list)    # (index, attempts) pairs

    def to_dict(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "seed": self.seed,
            "preset": self.preset,
            "resolved_preset": self.resolved_preset,
            "config": self.config,
            "tumors": [t.to_dict() for t in self.tumors],
            "skipped": [list(s) for s in self.skipped],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "ProvenanceRecord":
        return cls(
            scan_id=d["scan_id"],
            seed=d["seed"],
            preset=d["preset"],
            resolved_preset=d["resolved_preset"],
            config=d["config"],
            tumors=[TumorSpec.from_dict(t) for t in d["tumors"]],
            skipped=[tuple(s) for s in d.get("skipped", [])],
        )

    @classmethod
    def from_json(cls, text: str) -> "ProvenanceRecord":
        return cls.from_dict(json.loads(text))


def _draw_missing(spec: TumorSpec, cfg: GenConfig, stats: ParenchymaStats,
                  shared_mean_hu, rng) -> TumorSpec:
    """Fill unset spec fields from their sampling defaults (fixed draw order)."""
    preset = PRESETS.get(spec.preset)
    if spec.radius_mm is None:
        if preset is None:
            raise ValueError(f"tumor {spec.index}: radius_mm or a known preset is required")
        spec.radius_mm = preset.radius_mm
    if spec.half_axes_mm is None:
        lo, hi = cfg.half_axis_factors
        spec.half_axes_mm = tuple(float(rng.uniform(lo * spec.radius_mm, hi * spec.radius_mm)) for _ in range(3))
    if spec.edge_softness is None:
        spec.edge_softness = float(rng.uniform(*cfg.edge_softness_range))
    if spec.deform_strength is None:
        spec.deform_strength = preset.draw_deform(rng) if preset is not None else 0.0
    if spec.grain_scale is None:
        spec.grain_scale = float(rng.uniform(*cfg.grain_scale_range))
    if spec.mean_hu is None:
        if shared_mean_hu is not None:
            spec.mean_hu = shared_mean_hu
        else:
            lo, hi = cfg.tumor_mean_hu_range(stats.mu_p)
            spec.mean_hu = float(rng.uniform(lo, hi))
    return spec


def _blend_box(spec: TumorSpec, spacing, dims):
    cap_margin = 4  # covers the capsule blur reach
    slices = []
    for i in range(3):
        half = (
            math.ceil(spec.half_axes_mm[i] / spacing[i])
            + math.ceil(spec.deform_strength)
            + math.ceil(4.0 * spec.edge_softness) + 1
            + cap_margin + 2
        )
        c = int(spec.center[i])
        slices.append(slice(max(0, c - half), min(dims[i], c + half + 1)))
    return tuple(slices)


def _shape_box(spec: TumorSpec, spacing, blend_box):
    """Tight sub-box for shape generation: ellipsoid support plus the
    deformation displacement bound. Deforming on this box and pasting into
    the blend box is exact because displacements cannot exceed the bound."""
    slices = []
    for i, outer in enumerate(blend_box):
        half = (math.ceil(spec.half_axes_mm[i] / spacing[i])
                + math.ceil(spec.deform_strength) + 2)
        c = int(spec.center[i])
        slices.append(slice(max(outer.start, c - half), min(outer.stop, c + half + 1)))
    return tuple(slices)


def implant_tumor(scan: np.ndarray, labels: np.ndarray, spec: TumorSpec,
                  cfg: GenConfig, stats: ParenchymaStats, spacing, seed: int) -> TumorResult:
    """Implant one fully-specified tumor into the scan and label arrays in place."""
    box = _blend_box(spec, spacing, scan.shape)
    box_dims = tuple(s.stop - s.start for s in box)
    offset = tuple(s.start for s in box)

    sbox = _shape_box(spec, spacing, box)
    binary_sub = ellipsoid_array(
        spec.center, spec.half_axes_mm,
        tuple(s.stop - s.start for s in sbox), spacing,
        tuple(s.start for s in sbox),
    )
    binary_sub = deform_array(
        binary_sub, spec.deform_strength, substream(seed, 1, spec.index, _STREAM_DEFORM),
        smoothing=cfg.deform_smoothing_voxels, amplitude=cfg.deform_amplitude,
    )
    binary = np.zeros(box_dims, dtype=bool)
    paste = tuple(slice(s.start - o.start, s.stop - o.start)
                  for s, o in zip(sbox, box))
    binary[paste] = binary_sub

    soft = blur_array(binary.astype(np.float32), spec.edge_softness)
    np.clip(soft, 0.0, 1.0, out=soft)

    tex_params = TextureParams(
        mean_hu=spec.mean_hu,
        sigma_hu=stats.sigma_p * spec.texture_sigma_scale,
        grain_scale=spec.grain_scale,
        blur_sigma=cfg.texture_blur_sigma,
    )
    tex = generate_texture(box_dims, tex_params, substream(seed, 1, spec.index, _STREAM_NOISE))
    blend_arrays(scan[box], labels[box], soft.astype(scan.dtype, copy=False),
                 tex.data.astype(scan.dtype), cfg.label_threshold)

    mass_on = spec.mass_effect if spec.mass_effect is not None else cfg.enable_mass_effect
    intensity = spec.mass_intensity if spec.mass_intensity is not None else cfg.mass_intensity
    if mass_on and intensity > 0:
        bulge_warp_arrays(scan, labels, spec.center,
                          cfg.bulge_radius_factor * spec.radius_mm, intensity, spacing)

    capsule_on = spec.capsule if spec.capsule is not None else cfg.enable_capsule
    if capsule_on and cfg.capsule_brightness_hu > 0:
        capsule_arrays(scan[box], soft, CapsuleParams(
            cfg.capsule_edge_band, cfg.capsule_blur_sigma, cfg.capsule_brightness_hu))

    return TumorResult(spec, box, soft)


def _separation_radii(radius_mm: float, spacing, cfg: GenConfig) -> tuple:
    return tuple(
        int(np.ceil(cfg.core_margin_factor * radius_mm / s)) + cfg.core_margin_voxels
        for s in spacing
    )


def _run(ct: ScalarVolume, liver: LabelVolume, specs, seed, cfg, stats, vessels,
         scan_id, preset_label, resolved_label):
    spacing = tuple(ct.spacing)
    scan = ct.data.astype(np.float64 if ct.data.dtype == np.float64 else np.float32, copy=True)
    labels = liver.data.astype(np.uint8, copy=True)
    cores = np.zeros(scan.shape, dtype=bool)
    liver_idx = liver_voxel_indices(liver)
    vessel_data = vessels.data if isinstance(vessels, SoftMask) else vessels

    implanted, skipped, results = [], [], []
    for spec in specs:
        spec.validate(cfg, stats.mu_p)
        if spec.center is None:
            req = PlacementRequest(spec.radius_mm, cfg.max_attempts)
            try:
                center, attempts = sample_location(
                    liver, vessels, req, substream(seed, 1, spec.index, _STREAM_PLACEMENT),
                    blocked=cores, blocked_radii=_separation_radii(spec.radius_mm, spacing, cfg),
                    liver_indices=liver_idx,
                )
            except PlacementError as err:
                skipped.append((spec.index, err.attempts))
                continue
            spec.center = center
            spec.attempts = attempts
        else:
            spec.center = tuple(int(c) for c in spec.center)
            if vessel_data is not None and not collision_free(
                vessel_data, spec.center, voxel_radii(spec.radius_mm, spacing)
            ):
                raise CollisionError(spec.index)

        results.append(implant_tumor(scan, labels, spec, cfg, stats, spacing, seed))
        box = results[-1].box
        cores[box] |= results[-1].soft_mask >= cfg.label_threshold
        implanted.append(spec)

    if not implanted:
        raise SynthesisError(
            f"no tumors could be placed ({len(skipped)} placements exhausted)"
        )

    prov = ProvenanceRecord(
        scan_id=scan_id,
        seed=int(seed),
        preset=preset_label,
        resolved_preset=resolved_label,
        config=cfg.to_dict(),
        tumors=implanted,
        skipped=skipped,
    )
    out_ct = ScalarVolume(scan, ct.spacing, ct.origin, ct.affine)
    out_labels = LabelVolume(labels, ct.spacing, ct.origin, ct.affine)
    return out_ct, out_labels, prov


def synthesize(ct: ScalarVolume, liver: LabelVolume, preset: str, seed: int,
               cfg: GenConfig | None = None, vessels: SoftMask | None = None,
               stats: ParenchymaStats | None = None, scan_id: str = ""):
    """Synthesize tumors in a scan per a size preset.

    Returns ``(ct_with_tumors, labels, provenance)``. ``vessels``/``stats``
    may be passed in when the same scan is synthesized repeatedly; they are
    computed once per call otherwise.
    """
    cfg = cfg or GenConfig()
    require_same_geometry(ct, liver, "ct and liver mask")
    if stats is None:
        stats = estimate_parenchyma_stats(ct, liver, cfg)
    if vessels is None:
        vessels = segment_vessels(ct, liver, stats, cfg)

    scan_rng = substream(seed, 0)
    sized = resolve_preset(preset, scan_rng)
    count = sized.draw_count(scan_rng)
    shared_mean = None
    if cfg.share_tumor_mean_hu and preset != "mix":
        lo, hi = cfg.tumor_mean_hu_range(stats.mu_p)
        shared_mean = float(scan_rng.uniform(lo, hi))

    specs = []
    for i in range(count):
        spec = TumorSpec(index=i, preset=sized.name, radius_mm=sized.radius_mm)
        _draw_missing(spec, cfg, stats, shared_mean, substream(seed, 1, i, _STREAM_PARAMS))
        specs.append(spec)

    return _run(ct, liver, specs, seed, cfg, stats, vessels, scan_id, preset, sized.name)


def synthesize_with_spec(ct: ScalarVolume, liver: LabelVolume, specs, seed: int,
                         cfg: GenConfig | None = None, vessels: SoftMask | None = None,
                         stats: ParenchymaStats | None = None, scan_id: str = ""):
    """Synthesize with explicit tumor specs; unset fields are sampled.

    Pinned centers skip placement but are still checked against vessels.
    An empty spec list returns unchanged copies of the inputs (the identity
    pipeline used by previews).
    """
    cfg = cfg or GenConfig()
    require_same_geometry(ct, liver, "ct and liver mask")
    if stats is None:
        stats = estimate_parenchyma_stats(ct, liver, cfg)
    if vessels is None:
        vessels = segment_vessels(ct, liver, stats, cfg)

    specs = [copy.deepcopy(s) for s in specs]
    if not specs:
        prov = ProvenanceRecord(scan_id, int(seed), "custom", "custom", cfg.to_dict())
        return ct.copy(), liver.copy(), prov

    for i, spec in enumerate(specs):
        if spec.index is None:
            spec.index = i
        _draw_missing(spec, cfg, stats, None, substream(seed, 1, spec.index, _STREAM_PARAMS))

    return _run(ct, liver, specs, seed, cfg, stats, vessels, scan_id, "custom", "custom")


def replay(ct: ScalarVolume, liver: LabelVolume, record: ProvenanceRecord):
    """Re-run a recorded synthesis; output volumes are bit-identical."""
    cfg = GenConfig.from_dict(record.config)
    return synthesize_with_spec(ct, liver, record.tumors, record.seed, cfg,
                                scan_id=record.scan_id)
