import hashlib
import json

import numpy as np
import pytest
from click.testing import CliRunner

from tumorlab import make_phantom, save_nifti
from tumorlab.cli import main
from tumorlab.nifti import load_label, load_nifti


@pytest.fixture(scope="module")
def phantom_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixtures")
    ct, liver = make_phantom((40, 40, 40), liver_margin=4)
    ct_path = root / "phantom_ct.nii.gz"
    liver_path = root / "phantom_liver.nii.gz"
    save_nifti(ct, ct_path)
    save_nifti(liver, liver_path)
    return ct_path, liver_path


def test_help_all_subcommands():
    runner = CliRunner()
    for args in ([], ["vessels"], ["synth"], ["grid"], ["grid", "build"],
                 ["grid", "eval"], ["eval"], ["turing-export"], ["serve"]):
        result = runner.invoke(main, args + ["--help"])
        assert result.exit_code == 0, result.output
        assert "Usage" in result.output


def test_missing_required_flag_is_usage_error():
    result = CliRunner().invoke(main, ["synth", "--seed", "1"])
    assert result.exit_code == 2


def test_nonexistent_input_exits_1_with_path():
    result = CliRunner().invoke(
        main,
        ["vessels", "--ct", "/nope/missing.nii", "--liver", "/nope/liver.nii",
         "--out", "/tmp/out.nii"],
    )
    assert result.exit_code == 1
    assert "missing.nii" in result.output


def test_vessels_command(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files
    out = tmp_path / "vessels.nii.gz"
    result = CliRunner().invoke(
        main, ["vessels", "--ct", str(ct_path), "--liver", str(liver_path),
               "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    assert out.exists()
    payload = json.loads(result.output.strip().splitlines()[-1])
    assert payload["vessel_voxels"] == 0  # smooth phantom has none
    assert "config:" in result.output  # resolved config surfaced


def test_synth_deterministic_with_recorded_checksum(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files

    def run(out_dir):
        out_dir.mkdir()
        args = ["synth", "--ct", str(ct_path), "--liver", str(liver_path),
                "--preset", "tiny", "--seed", "7",
                "--out-ct", str(out_dir / "ct.nii.gz"),
                "--out-label", str(out_dir / "label.nii.gz"),
                "--provenance", str(out_dir / "prov.json")]
        result = CliRunner().invoke(main, args)
        assert result.exit_code == 0, result.output
        return (
            hashlib.sha256((out_dir / "ct.nii.gz").read_bytes()).hexdigest(),
            hashlib.sha256((out_dir / "label.nii.gz").read_bytes()).hexdigest(),
        )

    sums1 = run(tmp_path / "a")
    sums2 = run(tmp_path / "b")
    assert sums1 == sums2

    prov = json.loads((tmp_path / "a" / "prov.json").read_text())
    assert prov["seed"] == 7
    assert prov["preset"] == "tiny"
    labels = load_label(tmp_path / "a" / "label.nii.gz")
    assert set(np.unique(labels.data).tolist()) <= {0, 1, 2}
    assert (labels.data == 2).any()


def test_synth_training_flag(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files
    args = ["synth", "--ct", str(ct_path), "--liver", str(liver_path),
            "--preset", "tiny", "--seed", "3", "--training",
            "--out-ct", str(tmp_path / "ct.nii.gz"),
            "--out-label", str(tmp_path / "label.nii.gz")]
    result = CliRunner().invoke(main, args)
    assert result.exit_code == 0, result.output
    assert '"enable_capsule": false' in result.output


def test_eval_command(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files
    out_ct = tmp_path / "ct.nii.gz"
    out_label = tmp_path / "label.nii.gz"
    result = CliRunner().invoke(
        main, ["synth", "--ct", str(ct_path), "--liver", str(liver_path),
               "--preset", "tiny", "--seed", "5",
               "--out-ct", str(out_ct), "--out-label", str(out_label)],
    )
    assert result.exit_code == 0, result.output

    report = tmp_path / "report.jsonl"
    result = CliRunner().invoke(
        main, ["eval", "--gt", str(out_label), "--pred", str(out_label),
               "--report", str(report)],
    )
    assert result.exit_code == 0, result.output
    summary_line = next(l for l in result.output.splitlines() if l.startswith("{"))
    summary = json.loads(summary_line)
    assert summary["dsc"] == 1.0
    assert summary["nsd"] == 1.0
    assert report.exists()
    lines = [json.loads(l) for l in report.read_text().splitlines() if l.strip()]
    assert lines[0]["kind"] == "scores"


def test_grid_build_and_eval(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files
    out_dir = tmp_path / "grid"
    result = CliRunner().invoke(
        main, ["grid", "build", "--ct", str(ct_path), "--liver", str(liver_path),
               "--out-dir", str(out_dir), "--levels", "3", "--seed", "2"],
    )
    assert result.exit_code == 0, result.output
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert len(manifest["variants"]) == 15

    pred_dir = tmp_path / "preds"
    pred_dir.mkdir()
    for variant in manifest["variants"]:
        lab = load_label(out_dir / variant["label_path"])
        save_nifti(lab, pred_dir / f"{variant['variant_id']}.nii.gz")
    report = tmp_path / "grid_report.jsonl"
    result = CliRunner().invoke(
        main, ["grid", "eval", "--manifest", str(out_dir / "manifest.json"),
               "--pred-dir", str(pred_dir), "--report", str(report)],
    )
    assert result.exit_code == 0, result.output
    assert "size" in result.output
    recs = [json.loads(l) for l in report.read_text().splitlines() if l.strip()]
    assert all(r["mean_dsc"] == 1.0 for r in recs)


def test_grid_eval_missing_prediction(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files
    out_dir = tmp_path / "grid"
    CliRunner().invoke(
        main, ["grid", "build", "--ct", str(ct_path), "--liver", str(liver_path),
               "--out-dir", str(out_dir), "--levels", "3", "--seed", "2"],
    )
    pred_dir = tmp_path / "empty_preds"
    pred_dir.mkdir()
    result = CliRunner().invoke(
        main, ["grid", "eval", "--manifest", str(out_dir / "manifest.json"),
               "--pred-dir", str(pred_dir)],
    )
    assert result.exit_code == 1
    assert "error kind=EvaluationError" in result.output


def test_turing_export(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files
    manifest = [
        {"path": str(ct_path), "truth": "real", "liver": str(liver_path)},
        {"path": str(ct_path), "truth": "synthetic"},
        {"path": str(ct_path), "truth": "real"},
    ]
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))
    out_dir = tmp_path / "bundle"
    result = CliRunner().invoke(
        main, ["turing-export", "--manifest", str(manifest_path),
               "--out-dir", str(out_dir), "--seed", "4"],
    )
    assert result.exit_code == 0, result.output
    truth = json.loads((out_dir / "truth.json").read_text())
    assert len(truth) == 3
    assert sorted(truth) == ["scan_000", "scan_001", "scan_002"]
    assert sorted(truth.values()) == ["real", "real", "synthetic"]
    for sid in truth:
        assert (out_dir / f"{sid}.nii.gz").exists()


def test_config_file_round_trip(tmp_path, phantom_files):
    ct_path, liver_path = phantom_files
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"vessel_threshold_offset": 25.0}))
    out = tmp_path / "v.nii.gz"
    result = CliRunner().invoke(
        main, ["vessels", "--ct", str(ct_path), "--liver", str(liver_path),
               "--out", str(out), "--config", str(config)],
    )
    assert result.exit_code == 0, result.output
    assert '"vessel_threshold_offset": 25.0' in result.output

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no_such_knob": 1}))
    result = CliRunner().invoke(
        main, ["vessels", "--ct", str(ct_path), "--liver", str(liver_path),
               "--out", str(out), "--config", str(bad)],
    )
    assert result.exit_code == 1
