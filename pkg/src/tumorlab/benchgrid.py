"""Controllable out-of-distribution benchmark grids.

For each base scan the builder sweeps one generation dimension at a time --
shape, size, texture, intensity, location -- across graded severity levels,
holding everything else at its in-distribution mean. Scalar parameters move
in units of their in-distribution standard deviation, measured empirically
from seeded mix-preset draws; location severity instead restricts the center
to lower quantiles of distance-to-vessel/liver-surface (nearer is harder).
Every variant is generated from a fully pinned tumor spec, so a manifest is
deterministic under its seed and each variant can be regenerated alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EvaluationError
from .generator import synthesize_with_spec
from .metrics import dsc
from .nifti import load_label, load_nifti, save_nifti
from .params import GenConfig, TumorSpec, resolve_preset, substream
from .placement import voxel_radii
from .vessels import estimate_parenchyma_stats, segment_vessels

DIMENSIONS = ("shape", "size", "texture", "intensity", "location")

MIN_RADIUS_MM = 2.0   # smallest plausible tumor radius when a level clamps
BASE_HALF_AXIS_SPREAD = 0.25
SIGMA_SCALE_STEP = 0.5       # texture noise multiplier step per severity unit
SPREAD_STEP = 0.5            # half-axis spread growth per severity unit


def default_offsets(n_levels: int):
    if n_levels == 5:
        return [-2.0, -1.0, 0.0, 1.0, 2.0]
    if n_levels == 3:
        return [1.0, 2.0, 3.0]
    raise ValueError("supported level counts are 3 and 5")


def location_quantiles(n_levels: int):
    if n_levels == 5:
        return [1.0, 0.75, 0.5, 0.25, 0.1]
    return [0.5, 0.25, 0.1]


@dataclass(frozen=True)
class ParamDistribution:
    """Empirical in-distribution mean/std of the swept scalar parameters."""

    radius: tuple
    deform: tuple
    grain: tuple
    mean_hu: tuple

    def to_dict(self):
        return {k: list(v) for k, v in self.__dict__.items()}


def measure_distribution(cfg: GenConfig, parenchyma_mean: float, seed: int,
                         draws: int = 1000) -> ParamDistribution:
    """Mean/std of radius, deformation, grain, and tumor HU over mix-preset draws."""
    rng = substream(seed, 9000)
    radii, deforms, grains, means = [], [], [], []
    lo_hu, hi_hu = cfg.tumor_mean_hu_range(parenchyma_mean)
    for _ in range(draws):
        preset = resolve_preset("mix", rng)
        radii.append(preset.radius_mm)
        deforms.append(preset.draw_deform(rng))
        grains.append(rng.uniform(*cfg.grain_scale_range))
        means.append(rng.uniform(lo_hu, hi_hu))

    def stats(xs):
        arr = np.asarray(xs, dtype=np.float64)
        return (float(arr.mean()), float(arr.std()))

    return ParamDistribution(stats(radii), stats(deforms), stats(grains), stats(means))


@dataclass
class GridVariant:
    variant_id: str
    scan_id: str
    dimension: str
    level_index: int
    level_offset: float
    seed: int
    spec: dict
    ct_path: str
    label_path: str
    clamped: bool = False
    note: str = ""

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class GridManifest:
    seed: int
    offsets: list
    dimensions: tuple = DIMENSIONS
    config: dict = field(default_factory=dict)
    scans: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)   # scan_id -> distribution dict
    variants: list = field(default_factory=list)
    root: str = ""

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "offsets": self.offsets,
            "dimensions": list(self.dimensions),
            "config": self.config,
            "scans": self.scans,
            "measured": self.measured,
            "variants": [v.to_dict() for v in self.variants],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str, root: str = "") -> "GridManifest":
        d = json.loads(text)
        m = cls(
            seed=d["seed"],
            offsets=d["offsets"],
            dimensions=tuple(d["dimensions"]),
            config=d["config"],
            scans=d["scans"],
            measured=d["measured"],
            root=root,
        )
        m.variants = [GridVariant(**v) for v in d["variants"]]
        return m

    @classmethod
    def load(cls, path) -> "GridManifest":
        path = Path(path)
        return cls.from_json(path.read_text(), root=str(path.parent))


def _feasible_centers(liver_data, vessel_data, radii):
    """Liver voxels whose collision box contains no vessel voxel."""
    size = tuple(2 * r + 1 for r in radii)
    if vessel_data.any():
        blocked = ndimage.maximum_filter(vessel_data.astype(np.uint8), size=size) > 0
    else:
        blocked = np.zeros_like(vessel_data, dtype=bool)
    return (liver_data == 1) & ~blocked


def _obstacle_distance(liver_data, vessel_data, spacing):
    obstacle = (liver_data != 1) | vessel_data
    if obstacle.all():
        return np.zeros(liver_data.shape, dtype=np.float64)
    return ndimage.distance_transform_edt(~obstacle, sampling=spacing)


def _sample_center(feasible, rng, dist_map=None, quantile=1.0):
    pool = np.flatnonzero(feasible)
    if pool.size == 0:
        raise EvaluationError("no feasible tumor centers in scan")
    if dist_map is not None and quantile < 1.0:
        dvals = dist_map.ravel()[pool]
        cutoff = np.quantile(dvals, quantile)
        near = pool[dvals <= cutoff]
        if near.size:
            pool = near
    flat = int(pool[int(rng.integers(pool.size))])
    return tuple(int(c) for c in np.unravel_index(flat, feasible.shape))


def _variant_spec(dimension, offset, level_index, n_levels, dist, cfg, rng,
                  feasible, dist_map):
    """Fully pinned single-tumor spec for one (dimension, level) cell."""
    clamped = False
    notes = []

    radius = dist.radius[0]
    deform = dist.deform[0]
    grain = dist.grain[0]
    mean_hu = dist.mean_hu[0]
    spread = BASE_HALF_AXIS_SPREAD
    sigma_scale = 1.0
    quantile = 1.0

    if dimension == "size":
        radius = dist.radius[0] + offset * dist.radius[1]
        if radius < MIN_RADIUS_MM:
            radius = MIN_RADIUS_MM
            clamped = True
            notes.append(f"radius clamped to minimum feasible {MIN_RADIUS_MM} mm")
    elif dimension == "shape":
        deform = dist.deform[0] + offset * dist.deform[1]
        if deform < 0:
            deform = 0.0
            clamped = True
            notes.append("deformation clamped to 0")
        spread = BASE_HALF_AXIS_SPREAD * (1.0 + SPREAD_STEP * abs(offset))
        spread = min(spread, 0.9)
    elif dimension == "texture":
        grain = dist.grain[0] + offset * dist.grain[1]
        if grain < 1.0:
            grain = 1.0
            clamped = True
            notes.append("grain scale clamped to 1.0")
        sigma_scale = max(0.1, 1.0 + SIGMA_SCALE_STEP * offset)
    elif dimension == "intensity":
        mean_hu = dist.mean_hu[0] + offset * dist.mean_hu[1]
    elif dimension == "location":
        quantile = location_quantiles(n_levels)[level_index]
        notes.append(f"center from distance quantile <= {quantile}")
    else:
        raise ValueError(f"unknown dimension {dimension}")

    half_axes = tuple(
        float(rng.uniform((1 - spread) * radius, (1 + spread) * radius))
        for _ in range(3)
    )
    center = _sample_center(feasible, rng, dist_map, quantile)
    lo, hi = cfg.edge_softness_range
    spec = TumorSpec(
        index=0,
        preset="grid",
        center=center,
        radius_mm=float(radius),
        half_axes_mm=half_axes,
        mean_hu=float(mean_hu),
        grain_scale=float(grain),
        edge_softness=(lo + hi) / 2.0,
        deform_strength=float(deform),
        texture_sigma_scale=float(sigma_scale),
    )
    return spec, clamped, "; ".join(notes)


def build_grid(scans, out_dir, cfg: GenConfig | None = None, levels: int = 5,
               seed: int = 0, compress: bool = True) -> GridManifest:
    """Build the variant grid for a list of ``(scan_id, ct, liver)`` scans.

    Writes one CT/label NIfTI pair per (scan, dimension, level) cell under
    ``out_dir/volumes`` and the manifest to ``out_dir/manifest.json``.
    """
    cfg = cfg or GenConfig()
    offsets = default_offsets(levels)
    out_dir = Path(out_dir)
    (out_dir / "volumes").mkdir(parents=True, exist_ok=True)
    ext = ".nii.gz" if compress else ".nii"

    manifest = GridManifest(seed=int(seed), offsets=offsets, config=cfg.to_dict(),
                            root=str(out_dir))
    for scan_idx, (scan_id, ct, liver) in enumerate(scans):
        stats = estimate_parenchyma_stats(ct, liver, cfg)
        vessels = segment_vessels(ct, liver, stats, cfg)
        dist = measure_distribution(cfg, stats.mu_p, seed)
        manifest.scans.append(scan_id)
        manifest.measured[scan_id] = dist.to_dict()

        dist_map = _obstacle_distance(liver.data, vessels.data.astype(bool), ct.spacing)
        base_radii = voxel_radii(dist.radius[0], ct.spacing)

        for dim_idx, dimension in enumerate(DIMENSIONS):
            for level_index, offset in enumerate(offsets):
                rng = substream(seed, 7, scan_idx, dim_idx, level_index)
                radius_guess = (
                    max(MIN_RADIUS_MM, dist.radius[0] + offset * dist.radius[1])
                    if dimension == "size" else dist.radius[0]
                )
                radii = (voxel_radii(radius_guess, ct.spacing)
                         if dimension == "size" else base_radii)
                feasible = _feasible_centers(liver.data, vessels.data.astype(bool), radii)
                spec, clamped, note = _variant_spec(
                    dimension, offset, level_index, levels, dist, cfg, rng,
                    feasible, dist_map,
                )
                variant_seed = int(substream(seed, 8, scan_idx, dim_idx, level_index)
                                   .integers(2**62))
                out_ct, out_labels, _ = synthesize_with_spec(
                    ct, liver, [spec], variant_seed, cfg,
                    vessels=vessels, stats=stats, scan_id=scan_id,
                )
                variant_id = f"{scan_id}__{dimension}__L{level_index}"
                ct_rel = f"volumes/{variant_id}_ct{ext}"
                label_rel = f"volumes/{variant_id}_label{ext}"
                save_nifti(out_ct, out_dir / ct_rel)
                save_nifti(out_labels, out_dir / label_rel)
                manifest.variants.append(GridVariant(
                    variant_id=variant_id,
                    scan_id=scan_id,
                    dimension=dimension,
                    level_index=level_index,
                    level_offset=float(offset),
                    seed=variant_seed,
                    spec=spec.to_dict(),
                    ct_path=ct_rel,
                    label_path=label_rel,
                    clamped=clamped,
                    note=note,
                ))

    manifest.save(out_dir / "manifest.json")
    return manifest


def evaluate_grid(manifest: GridManifest, pred_dir) -> dict:
    """Mean DSC per (dimension, level) across scans.

    Predictions must exist as ``<variant_id>.nii(.gz)`` under ``pred_dir``;
    any missing prediction aborts the evaluation with the full missing list.
    """
    pred_dir = Path(pred_dir)
    root = Path(manifest.root) if manifest.root else Path(".")

    missing = []
    for variant in manifest.variants:
        if not any((pred_dir / f"{variant.variant_id}{ext}").exists()
                   for ext in (".nii.gz", ".nii")):
            missing.append(variant.variant_id)
    if missing:
        raise EvaluationError(
            f"missing predictions for {len(missing)} variants: {', '.join(missing)}",
            missing=missing,
        )

    cells = {}
    for variant in manifest.variants:
        gt = load_label(root / variant.label_path)
        pred_path = pred_dir / f"{variant.variant_id}.nii.gz"
        if not pred_path.exists():
            pred_path = pred_dir / f"{variant.variant_id}.nii"
        pred = load_nifti(pred_path)
        score = dsc(gt.data == 2, pred.data == 2)
        cells.setdefault((variant.dimension, variant.level_index), []).append(score)

    return {key: float(np.mean(vals)) for key, vals in sorted(cells.items())}


def format_grid_table(manifest: GridManifest, cells: dict) -> str:
    levels = sorted({lvl for _, lvl in cells})
    header = "dimension " + " ".join(
        f"L{lvl}({manifest.offsets[lvl]:+g})".rjust(10) for lvl in levels
    )
    lines = [header]
    for dim in manifest.dimensions:
        row = [f"{dim:<10}"]
        for lvl in levels:
            val = cells.get((dim, lvl))
            row.append(f"{100 * val:10.2f}" if val is not None else " " * 10)
        lines.append(" ".join(row))
    return "\n".join(lines)


def grid_records(cells: dict) -> str:
    recs = [
        {"dimension": dim, "level": lvl, "mean_dsc": val}
        for (dim, lvl), val in sorted(cells.items())
    ]
    return "\n".join(json.dumps(r, sort_keys=True) for r in recs)
