"""Acceptance suite: one test per release criterion, each at its pinned
tolerance, printing one PASS line per criterion (run with ``-v -s``).

Some criteria run thousands of seeded syntheses and take a few minutes;
everything is deterministic, so a green run is reproducible bit for bit.
"""

import hashlib
import json

import numpy as np
import pytest

from tumorlab import (
    GenConfig,
    LabelVolume,
    ScalarVolume,
    SoftMask,
    TuringCounts,
    TumorSpec,
    blend_tumor,
    build_grid,
    connected_components,
    detect,
    dsc,
    make_phantom,
    mass_effect_warp,
    nsd,
    sample_location,
    save_nifti,
    synthesize,
    turing_metrics,
)
from tumorlab.composite import BulgeParams, bulge_source_distance
from tumorlab.generator import implant_tumor
from tumorlab.params import PRESETS, substream
from tumorlab.placement import PlacementRequest, voxel_radii
from tumorlab.texture import TextureParams, generate_texture, lag1_autocorrelation
from tumorlab.vessels import estimate_parenchyma_stats, segment_vessels

from oracles import box_has_vessel, detect_bruteforce, dsc_bruteforce, nsd_bruteforce


def _ok(name, detail=""):
    print(f"\nACCEPTANCE PASS: {name}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="module")
def big_phantom():
    """128^3, 1 mm isotropic, smooth vessel-free liver, stats precomputed."""
    ct, liver = make_phantom((128, 128, 128), liver_margin=6)
    cfg = GenConfig()
    stats = estimate_parenchyma_stats(ct, liver, cfg)
    vessels = segment_vessels(ct, liver, stats, cfg)
    return ct, liver, cfg, stats, vessels


def test_c01_bulge_warp_identity_at_zero_intensity():
    # intensity 0 must reduce to the identity: output bit-identical to input
    # on 20 random phantoms
    rng = np.random.default_rng(101)
    for trial in range(20):
        dims = tuple(int(d) for d in rng.integers(12, 33, size=3))
        spacing = tuple(float(s) for s in rng.choice([0.5, 1.0, 2.0], size=3))
        ct = ScalarVolume(rng.normal(50, 40, size=dims).astype(np.float32), spacing)
        labels = LabelVolume(rng.integers(0, 3, size=dims).astype(np.uint8), spacing)
        center = tuple(int(c) for c in (np.array(dims) // 2))
        p = BulgeParams(center, radius_mm=float(rng.uniform(3, 10)), intensity=0.0)
        out_ct, out_labels = mass_effect_warp(ct, labels, p)
        assert out_ct.data.tobytes() == ct.data.tobytes(), f"trial {trial}"
        assert out_labels.data.tobytes() == labels.data.tobytes(), f"trial {trial}"
    _ok("bulge warp identity at zero intensity", "20 phantoms, exact")


def test_c02_blend_formula_on_million_voxels():
    # f' = (1 - t)f + tT checked voxelwise against direct evaluation over
    # 10^6 randomized voxels, max abs error < 1e-5
    rng = np.random.default_rng(102)
    dims = (100, 100, 100)
    f = rng.normal(60, 80, size=dims)
    t = rng.random(dims)
    tex = rng.normal(60, 25, size=dims)
    lab = rng.integers(0, 2, size=dims).astype(np.uint8)
    out_ct, _ = blend_tumor(
        ScalarVolume(f), LabelVolume(lab), SoftMask(t), ScalarVolume(tex)
    )
    direct = (1.0 - t) * f + t * tex
    err = float(np.max(np.abs(out_ct.data - direct)))
    assert err < 1e-5, err
    _ok("blend matches direct evaluation", f"1e6 voxels, max abs err {err:.2e}")


def test_c03_bulge_pointwise_value():
    # at half radius with intensity 30 the source distance is 0.925 * (r/2)
    for gmax in (1.0, 7.3, 41.6):
        g = gmax / 2.0
        expect = 0.925 * g
        got = float(bulge_source_distance(g, gmax, 30.0))
        assert abs(got - expect) < 1e-9, (gmax, got, expect)
    _ok("bulge source-distance pointwise value", "0.925 * r/2 at 1e-9")


def test_c04_reader_study_tallies():
    junior = turing_metrics(TuringCounts(5, 15, 21, 8, real_unsure=1))
    assert junior.accuracy * 100 == pytest.approx(26.5, abs=0.05)
    assert junior.sensitivity * 100 == pytest.approx(27.6, abs=0.05)
    assert junior.specificity * 100 == pytest.approx(25.0, abs=0.05)
    senior = turing_metrics(TuringCounts(10, 2, 7, 12, real_unsure=8, synthetic_unsure=11))
    assert senior.accuracy * 100 == pytest.approx(71.0, abs=0.05)
    assert senior.sensitivity * 100 == pytest.approx(63.2, abs=0.05)
    assert senior.specificity * 100 == pytest.approx(83.3, abs=0.05)
    _ok("reader-study tallies", "junior 26.5/27.6/25.0, senior 71.0/63.2/83.3")


def test_c05_metric_oracle_equivalence():
    # dsc/detect exactly equal and nsd within 1e-9 of brute-force reference
    # implementations on 200 random volumes up to 16^3
    rng = np.random.default_rng(105)
    spacings = [(1.0, 1.0, 1.0), (0.5, 1.0, 2.0), (2.0, 2.0, 2.0), (0.5, 0.5, 0.5)]
    max_nsd_err = 0.0
    for trial in range(200):
        dims = tuple(int(d) for d in rng.integers(3, 17, size=3))
        density = rng.uniform(0.1, 0.5)
        a = rng.random(dims) < density
        b = rng.random(dims) < density
        sp = spacings[trial % len(spacings)]

        assert dsc(a, b) == dsc_bruteforce(a, b), f"dsc trial {trial}"

        got = nsd(a, b, sp, tolerance_mm=2.0)
        want = nsd_bruteforce(a, b, sp, tolerance_mm=2.0)
        max_nsd_err = max(max_nsd_err, abs(got - want))
        assert abs(got - want) <= 1e-9, f"nsd trial {trial}: {got} vs {want}"

        gt = LabelVolume((a.astype(np.uint8)) * 2, spacing=sp)
        pred = LabelVolume((b.astype(np.uint8)) * 2, spacing=sp)
        report = detect(gt, pred)
        tumors, fps = detect_bruteforce(gt.data, pred.data, sp)
        assert report.false_positives == fps, f"detect trial {trial}"
        got_t = sorted((round(r, 9), d) for r, d in report.tumors)
        want_t = sorted((round(r, 9), d) for r, d in tumors)
        assert got_t == want_t, f"detect trial {trial}"
    _ok("metric oracle equivalence", f"200 volumes, max nsd err {max_nsd_err:.2e}")


def test_c06_preset_conformance_1000_runs(big_phantom):
    # 1000 seeded mix-preset syntheses: per-run tumor count within the
    # resolved preset's bounds, every drawn radius equal to the preset
    # radius, and measured equivalent radii below the per-preset caps
    # (tiny strictly below 8 mm). Zero violations allowed.
    ct, liver, cfg, stats, vessels = big_phantom
    violations = []
    per_preset = {}
    for seed in range(1000):
        out_ct, out_labels, prov = synthesize(
            ct, liver, "mix", seed, cfg, vessels=vessels, stats=stats
        )
        preset = PRESETS[prov.resolved_preset]
        per_preset[preset.name] = per_preset.get(preset.name, 0) + 1

        comps = connected_components(out_labels, target=2, connectivity=26)
        lo, hi = preset.count_range
        if not (lo <= comps.count <= hi):
            violations.append((seed, preset.name, "count", comps.count))
        if any(spec.radius_mm != preset.radius_mm for spec in prov.tumors):
            violations.append((seed, preset.name, "drawn-radius",
                               [s.radius_mm for s in prov.tumors]))
        cap = 1.5 * preset.radius_mm + 1.0
        if preset.name == "tiny":
            cap = min(cap, 8.0)
        bad_radii = [r for r in comps.radii_mm if r >= cap]
        if bad_radii:
            violations.append((seed, preset.name, "radius", bad_radii))
    assert violations == [], violations[:10]
    assert set(per_preset) == {"tiny", "small", "medium", "large"}
    _ok("preset conformance", f"1000 runs, draws {per_preset}, zero violations")


def test_c07_texture_statistics(big_phantom):
    # 50 large-preset tumors in training mode: core (soft mask >= 0.9) mean
    # HU within +-5 of the drawn tumor mean; lag-1 autocorrelation strictly
    # increases from grain 1.0 to 1.5 in at least 48 of 50 trials
    ct, liver, _, stats, _ = big_phantom
    cfg = GenConfig(enable_mass_effect=False, enable_capsule=False)
    preset = PRESETS["large"]
    center = (64, 64, 64)
    worst = 0.0
    increases = 0
    for trial in range(50):
        draw = substream(7000, trial)
        mean_hu = float(draw.uniform(*cfg.tumor_mean_hu_range(stats.mu_p)))
        spec = TumorSpec(
            index=0, preset="large", center=center, radius_mm=preset.radius_mm,
            half_axes_mm=tuple(float(draw.uniform(0.75 * 32, 1.25 * 32)) for _ in range(3)),
            mean_hu=mean_hu,
            grain_scale=float(draw.uniform(*cfg.grain_scale_range)),
            edge_softness=float(draw.uniform(*cfg.edge_softness_range)),
            deform_strength=float(draw.uniform(*preset.deform_range)),
        )
        scan = ct.data.astype(np.float32, copy=True)
        labels = liver.data.copy()
        result = implant_tumor(scan, labels, spec, cfg, stats, ct.spacing, seed=trial)
        core = result.soft_mask >= 0.9
        assert core.sum() > 1000
        offset = abs(float(scan[result.box][core].mean()) - mean_hu)
        worst = max(worst, offset)
        assert offset <= 5.0, f"trial {trial}: core mean off by {offset:.2f} HU"

        fine = TextureParams(mean_hu, stats.sigma_p, 1.0, cfg.texture_blur_sigma)
        coarse = TextureParams(mean_hu, stats.sigma_p, 1.5, cfg.texture_blur_sigma)
        ac_fine = lag1_autocorrelation(
            generate_texture((40, 40, 40), fine, substream(7100, trial)).data)
        ac_coarse = lag1_autocorrelation(
            generate_texture((40, 40, 40), coarse, substream(7100, trial)).data)
        if ac_coarse > ac_fine:
            increases += 1
    assert increases >= 48, increases
    _ok("texture statistics",
        f"worst core-mean offset {worst:.2f} HU, autocorr rose in {increases}/50")


def test_c08_vessel_avoidance_500_placements():
    # every accepted center across 500 seeded placements keeps its collision
    # box vessel-free, verified by an exhaustive box scan
    ct, liver = make_phantom((64, 64, 64), liver_margin=4)
    from tumorlab import add_rod

    vessel_mask = np.zeros(liver.dims, dtype=bool)
    for axis, offset in ((2, (20.0, 20.0)), (2, (44.0, 40.0)), (0, (32.0, 24.0))):
        _, rod = add_rod(ct, liver, axis=axis, offset=offset, radius_voxels=2.5)
        vessel_mask |= rod
    vessels = SoftMask(vessel_mask.astype(np.float32), liver.spacing)

    radius_mm = 5.0
    radii = voxel_radii(radius_mm, liver.spacing)
    req = PlacementRequest(radius_mm, max_attempts=500)
    for seed in range(500):
        center, _ = sample_location(liver, vessels, req, substream(seed, 8))
        assert not box_has_vessel(vessel_mask, center, radii), (seed, center)
    _ok("vessel avoidance", "500 placements, exhaustive post-check clean")


@pytest.fixture(scope="module")
def grid_builds(tmp_path_factory, big_phantom):
    ct, liver, cfg, _, _ = big_phantom
    root = tmp_path_factory.mktemp("acceptance_grid")
    scans = [("phantom128", ct, liver)]
    m1 = build_grid(scans, root / "g1", cfg, levels=5, seed=404)
    m2 = build_grid(scans, root / "g2", cfg, levels=5, seed=404)
    return root, m1, m2


def test_c09_grid_cardinality_and_manifest_determinism(grid_builds):
    # 5 dimensions x 5 levels on one scan: exactly 25 variants, and the
    # manifest is byte-identical across two builds with the same seed
    root, m1, m2 = grid_builds
    assert len(m1.variants) == 25
    per_dim = {}
    for v in m1.variants:
        per_dim[v.dimension] = per_dim.get(v.dimension, 0) + 1
    assert per_dim == {d: 5 for d in ("shape", "size", "texture", "intensity", "location")}
    assert (root / "g1" / "manifest.json").read_bytes() == \
           (root / "g2" / "manifest.json").read_bytes()
    _ok("grid cardinality", "25 variants (5x5), deterministic manifest")


def test_c10_full_determinism(big_phantom, grid_builds):
    # repeated synthesize with one seed is byte-identical end to end
    # (volumes and provenance), and every grid variant volume written by the
    # two same-seed builds is byte-identical
    ct, liver, cfg, _, _ = big_phantom
    a_ct, a_lab, a_prov = synthesize(ct, liver, "mix", seed=31337, cfg=cfg)
    b_ct, b_lab, b_prov = synthesize(ct, liver, "mix", seed=31337, cfg=cfg)
    assert a_ct.data.tobytes() == b_ct.data.tobytes()
    assert a_lab.data.tobytes() == b_lab.data.tobytes()
    assert a_prov.to_json() == b_prov.to_json()

    root, m1, m2 = grid_builds
    mismatched = []
    for v in m1.variants:
        for rel in (v.ct_path, v.label_path):
            h1 = hashlib.sha256((root / "g1" / rel).read_bytes()).hexdigest()
            h2 = hashlib.sha256((root / "g2" / rel).read_bytes()).hexdigest()
            if h1 != h2:
                mismatched.append(rel)
    assert mismatched == []
    _ok("determinism", "synthesize + 50 grid volumes byte-identical under seed")
