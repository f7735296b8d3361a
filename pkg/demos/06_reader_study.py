"""End-to-end reader-study workflow against a live server.

Synthesizes a small mixed bundle (3 healthy phantoms, 3 with tumors),
starts the HTTP service in-process, runs a scripted reader through a
session, and prints the final tally report.

Run: python demos/06_reader_study.py
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from tumorlab import make_phantom, save_nifti, synthesize
from tumorlab.server import create_app

work = Path(tempfile.mkdtemp(prefix="tumorlab_study_"))
print(f"bundle under {work}")

truth = {}
for i in range(6):
    ct, liver = make_phantom((64, 64, 64), liver_margin=5, noise_hu=3.0, seed=i)
    sid = f"scan_{i:03d}"
    if i % 2:
        ct, _, _ = synthesize(ct, liver, "medium", seed=100 + i)
        truth[sid] = "synthetic"
    else:
        truth[sid] = "real"
    save_nifti(ct, work / f"{sid}.nii.gz")
    save_nifti(liver, work / f"{sid}_liver.nii.gz")
(work / "truth.json").write_text(json.dumps(truth))

client = TestClient(create_app(work))
session = client.post("/sessions", json={"name": "demo reader", "seed": 5}).json()
print(f"session {session['session_id']}: {len(session['scans'])} scans, "
      f"order {session['scans']}")

# a reader who always answers "real" except for one correct call and one unsure
answers = {}
for i, sid in enumerate(session["scans"]):
    answers[sid] = "synthetic" if i == 1 else ("unsure" if i == 2 else "real")
for sid, judgment in answers.items():
    client.post(f"/sessions/{session['session_id']}/judge",
                json={"scan_id": sid, "judgment": judgment})

report = client.get(f"/sessions/{session['session_id']}/report").json()
print("\nreport:")
for key in ("accuracy", "sensitivity", "specificity", "definite", "unsure"):
    print(f"  {key}: {report[key]}")
print(f"  truth: {report['truth']}")
