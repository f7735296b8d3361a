"""Command-line entry points.

Subcommands: ``vessels`` (segment liver vessels), ``synth`` (implant tumors
into a scan), ``grid build``/``grid eval`` (robustness benchmark),
``eval`` (score a prediction against ground truth), ``turing-export``
(assemble an anonymized reader-study bundle), and ``serve`` (HTTP service).

Every run prints the resolved configuration and seed to stderr so published
outputs can always be regenerated. Engine failures exit with code 1 and a
one-line machine-parsable error; usage errors exit with code 2.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import benchgrid
from .errors import TumorLabError
from .generator import synthesize
from .metrics import detect, seg_scores
from .nifti import load_label, load_scalar, save_nifti
from .params import GenConfig, PRESET_NAMES, substream
from .vessels import estimate_parenchyma_stats, segment_vessels

CONFIG_ENV_VAR = "TUMORLAB_CONFIG"


def _load_config(path: str | None) -> GenConfig:
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return GenConfig()
    try:
        return GenConfig.from_json(Path(path).read_text())
    except FileNotFoundError:
        raise click.ClickException(f"config file not found: {path}") from None
    except (ValueError, json.JSONDecodeError) as err:
        raise click.ClickException(f"bad config file {path}: {err}") from None


def _announce(cfg: GenConfig, seed=None):
    click.echo(f"config: {cfg.to_json()}", err=True)
    if seed is not None:
        click.echo(f"seed: {seed}", err=True)


def _engine_errors(fn):
    """Engine failures become a one-line machine-parsable error and exit 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (TumorLabError, ValueError, OSError) as err:
            click.echo(
                f"error kind={type(err).__name__} message={json.dumps(str(err))}",
                err=True,
            )
            sys.exit(1)

    return wrapper


config_option = click.option("--config", "config_path", type=str, default=None,
                             help=f"JSON config file (or ${CONFIG_ENV_VAR}).")


@click.group()
def main():
    """Procedural liver tumor synthesis and evaluation."""


@main.command()
@click.option("--ct", "ct_path", required=True, type=str, help="Input CT NIfTI.")
@click.option("--liver", "liver_path", required=True, type=str, help="Liver mask NIfTI.")
@click.option("--out", "out_path", required=True, type=str, help="Vessel mask output.")
@config_option
@_engine_errors
def vessels(ct_path, liver_path, out_path, config_path):
    """Segment liver vessels by smoothed thresholding."""
    cfg = _load_config(config_path)
    _announce(cfg)
    ct = load_scalar(ct_path)
    liver = load_label(liver_path)
    stats = estimate_parenchyma_stats(ct, liver, cfg)
    mask = segment_vessels(ct, liver, stats, cfg)
    save_nifti(mask, out_path)
    click.echo(json.dumps({
        "out": str(out_path),
        "vessel_voxels": int(mask.data.sum()),
        "parenchyma_mean_hu": round(stats.mu_p, 3),
        "parenchyma_std_hu": round(stats.sigma_p, 3),
    }, sort_keys=True))


@main.command()
@click.option("--ct", "ct_path", required=True, type=str)
@click.option("--liver", "liver_path", required=True, type=str)
@click.option("--preset", type=click.Choice(PRESET_NAMES), default="mix", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out-ct", "out_ct_path", required=True, type=str)
@click.option("--out-label", "out_label_path", required=True, type=str)
@click.option("--provenance", "provenance_path", type=str, default=None,
              help="Write the replayable provenance record here.")
@click.option("--training", is_flag=True,
              help="Training-mode output: skip the bulge warp and capsule.")
@config_option
@_engine_errors
def synth(ct_path, liver_path, preset, seed, out_ct_path, out_label_path,
          provenance_path, training, config_path):
    """Implant synthetic tumors into a CT scan."""
    cfg = _load_config(config_path)
    if training:
        cfg = cfg.updated(enable_mass_effect=False, enable_capsule=False)
    _announce(cfg, seed)
    ct = load_scalar(ct_path)
    liver = load_label(liver_path)
    out_ct, out_labels, prov = synthesize(
        ct, liver, preset, seed, cfg, scan_id=Path(ct_path).name
    )
    save_nifti(out_ct, out_ct_path)
    save_nifti(out_labels, out_label_path)
    if provenance_path:
        Path(provenance_path).write_text(prov.to_json(indent=1))
    click.echo(json.dumps({
        "out_ct": str(out_ct_path),
        "out_label": str(out_label_path),
        "seed": seed,
        "preset": preset,
        "resolved_preset": prov.resolved_preset,
        "tumors": len(prov.tumors),
        "skipped": len(prov.skipped),
    }, sort_keys=True))


@main.group()
def grid():
    """Build or evaluate the out-of-distribution robustness grid."""


@grid.command("build")
@click.option("--ct", "ct_paths", multiple=True, required=True, type=str)
@click.option("--liver", "liver_paths", multiple=True, required=True, type=str)
@click.option("--out-dir", required=True, type=str)
@click.option("--levels", type=click.Choice(["3", "5"]), default="5", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@config_option
@_engine_errors
def grid_build(ct_paths, liver_paths, out_dir, levels, seed, config_path):
    """Generate one variant volume per (scan, dimension, severity level)."""
    if len(ct_paths) != len(liver_paths):
        raise click.UsageError("--ct and --liver must be given the same number of times")
    cfg = _load_config(config_path)
    _announce(cfg, seed)
    scans = []
    for ct_path, liver_path in zip(ct_paths, liver_paths):
        scan_id = Path(ct_path).name.split(".nii")[0]
        scans.append((scan_id, load_scalar(ct_path), load_label(liver_path)))
    manifest = benchgrid.build_grid(scans, out_dir, cfg, levels=int(levels), seed=seed)
    click.echo(json.dumps({
        "out_dir": str(out_dir),
        "scans": len(scans),
        "variants": len(manifest.variants),
        "manifest": str(Path(out_dir) / "manifest.json"),
    }, sort_keys=True))


@grid.command("eval")
@click.option("--manifest", "manifest_path", required=True, type=str)
@click.option("--pred-dir", required=True, type=str)
@click.option("--report", "report_path", type=str, default=None)
@_engine_errors
def grid_eval(manifest_path, pred_dir, report_path):
    """Score prediction masks for every grid variant."""
    manifest = benchgrid.GridManifest.load(manifest_path)
    cells = benchgrid.evaluate_grid(manifest, pred_dir)
    table = benchgrid.format_grid_table(manifest, cells)
    records = benchgrid.grid_records(cells)
    click.echo(table)
    if report_path:
        Path(report_path).write_text(records + "\n")
    click.echo(records)


@main.command("eval")
@click.option("--gt", "gt_path", required=True, type=str)
@click.option("--pred", "pred_path", required=True, type=str)
@click.option("--report", "report_path", type=str, default=None)
@click.option("--tolerance-mm", type=float, default=2.0, show_default=True)
@_engine_errors
def eval_cmd(gt_path, pred_path, report_path, tolerance_mm):
    """DSC, surface Dice, and per-tumor detection for one prediction."""
    gt = load_label(gt_path)
    pred = load_label(pred_path)
    scores = seg_scores(gt.data == 2, pred.data == 2, gt.spacing, tolerance_mm)
    detection = detect(gt, pred)
    summary = {
        "dsc": round(scores.dsc, 6),
        "nsd": round(scores.nsd, 6),
        "tolerance_mm": tolerance_mm,
        "sensitivity": detection.overall_sensitivity,
        "false_positives": detection.false_positives,
    }
    click.echo(json.dumps(summary, sort_keys=True))
    click.echo(detection.to_table())
    if report_path:
        lines = [json.dumps({"kind": "scores", **summary}, sort_keys=True)]
        lines.append(detection.to_jsonl())
        Path(report_path).write_text("\n".join(lines) + "\n")


@main.command("turing-export")
@click.option("--manifest", "manifest_path", required=True, type=str,
              help='JSON list of {"path", "truth": "real"|"synthetic", "liver"?}.')
@click.option("--out-dir", required=True, type=str)
@click.option("--seed", type=int, default=0, show_default=True)
@_engine_errors
def turing_export(manifest_path, out_dir, seed):
    """Assemble an anonymized, shuffled scan bundle for a reader study.

    Scans are re-saved under opaque ids with normalized headers; the truth
    map stays in ``truth.json`` next to them (server-side only).
    """
    entries = json.loads(Path(manifest_path).read_text())
    if not isinstance(entries, list) or not entries:
        raise click.ClickException("manifest must be a non-empty JSON list")
    for e in entries:
        if e.get("truth") not in ("real", "synthetic"):
            raise click.ClickException(f"entry {e} needs truth real|synthetic")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    order = substream(seed, 55).permutation(len(entries))
    truth = {}
    for anon_index, entry_index in enumerate(order):
        entry = entries[int(entry_index)]
        anon_id = f"scan_{anon_index:03d}"
        save_nifti(load_scalar(entry["path"]), out / f"{anon_id}.nii.gz")
        if entry.get("liver"):
            save_nifti(load_label(entry["liver"]), out / f"{anon_id}_liver.nii.gz")
        truth[anon_id] = entry["truth"]
    (out / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=1))
    click.echo(json.dumps({"out_dir": str(out), "scans": len(truth), "seed": seed},
                          sort_keys=True))


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--data-dir", required=True, type=str)
@click.option("--preview-cache-mb", type=int, default=256, show_default=True)
@config_option
@_engine_errors
def serve(port, host, data_dir, preview_cache_mb, config_path):
    """Serve slices, previews, and reader-study sessions over HTTP."""
    from .server import run_server

    cfg = _load_config(config_path)
    _announce(cfg)
    run_server(data_dir, port=port, host=host,
               preview_cache_mb=preview_cache_mb, config=cfg)


if __name__ == "__main__":
    main()
