"""Segmentation, detection, and reader-study metrics.

Volume overlap is scored with the Dice coefficient; boundary agreement with
the normalized surface Dice at a millimeter tolerance (boundary voxels under
6-connectivity, exact Euclidean distances). Detection works per ground-truth
tumor component with a configurable overlap fraction, reported per size
bucket. Reader-study tallies count only definite answers, with the synthetic
class as positive for sensitivity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import UndefinedMetricsError
from .kernels import label_components
from .volume import LabelVolume, require_same_geometry


def _as_bool(mask):
    if isinstance(mask, np.ndarray):
        return mask.astype(bool, copy=False)
    return mask.data.astype(bool)


def dsc(a, b) -> float:
    """Dice coefficient 2|A∩B| / (|A|+|B|); two empty masks score 1.0."""
    ma, mb = _as_bool(a), _as_bool(b)
    if ma.shape != mb.shape:
        raise ValueError(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((ma & mb).sum()) / total


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """Mask voxels with a 6-neighbor outside the mask (array edges count as outside)."""
    mask = mask.astype(bool, copy=False)
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = np.ones_like(mask)
    for axis in range(3):
        lo = tuple(slice(1, -1) if ax != axis else slice(0, -2) for ax in range(3))
        hi = tuple(slice(1, -1) if ax != axis else slice(2, None) for ax in range(3))
        interior &= padded[lo]
        interior &= padded[hi]
    return mask & ~interior


def nsd(a, b, spacing=None, tolerance_mm: float = 2.0) -> float:
    """Normalized surface Dice: fraction of boundary voxels of each mask lying
    within ``tolerance_mm`` of the other mask's boundary."""
    if spacing is None:
        spacing = getattr(a, "spacing", (1.0, 1.0, 1.0))
    ma, mb = _as_bool(a), _as_bool(b)
    if ma.shape != mb.shape:
        raise ValueError(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    if not ma.any() and not mb.any():
        return 1.0
    if not ma.any() or not mb.any():
        return 0.0

    sa = boundary_voxels(ma)
    sb = boundary_voxels(mb)
    dist_to_b = ndimage.distance_transform_edt(~sb, sampling=spacing)
    dist_to_a = ndimage.distance_transform_edt(~sa, sampling=spacing)
    close_a = int((dist_to_b[sa] <= tolerance_mm).sum())
    close_b = int((dist_to_a[sb] <= tolerance_mm).sum())
    return (close_a + close_b) / (int(sa.sum()) + int(sb.sum()))


@dataclass(frozen=True)
class SegScores:
    dsc: float
    nsd: float
    tolerance_mm: float = 2.0


def seg_scores(gt, pred, spacing=None, tolerance_mm: float = 2.0) -> SegScores:
    return SegScores(dsc(gt, pred), nsd(gt, pred, spacing, tolerance_mm), tolerance_mm)


# ---------------------------------------------------------------------------
# Per-tumor detection

COARSE_BUCKETS = (("<5mm", 0.0, 5.0), (">=5mm", 5.0, np.inf))
FINE_BUCKETS = (
    ("2-5mm", 0.0, 5.0),
    ("5-10mm", 5.0, 10.0),
    ("10-20mm", 10.0, 20.0),
    (">20mm", 20.0, np.inf),
)


@dataclass
class DetectionReport:
    """Per-tumor detection outcome plus sensitivity per size bucket."""

    tumors: list                       # (equivalent radius mm, detected) pairs
    sensitivity: dict                  # bucket name -> (detected, total, rate|None)
    false_positives: int
    min_overlap_fraction: float

    @property
    def overall_sensitivity(self):
        total = len(self.tumors)
        if total == 0:
            return None
        return sum(1 for _, det in self.tumors if det) / total

    def to_records(self):
        recs = [
            {"kind": "tumor", "radius_mm": round(r, 3), "detected": bool(d)}
            for r, d in self.tumors
        ]
        for name, (det, tot, rate) in self.sensitivity.items():
            recs.append({"kind": "bucket", "bucket": name, "detected": det,
                         "total": tot, "sensitivity": rate})
        recs.append({"kind": "false_positives", "count": self.false_positives})
        return recs

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.to_records())

    def to_table(self) -> str:
        lines = [f"{'bucket':<10} {'detected':>8} {'total':>6} {'sensitivity':>12}"]
        for name, (det, tot, rate) in self.sensitivity.items():
            shown = f"{rate:.3f}" if rate is not None else "n/a"
            lines.append(f"{name:<10} {det:>8} {tot:>6} {shown:>12}")
        overall = self.overall_sensitivity
        shown = f"{overall:.3f}" if overall is not None else "n/a"
        lines.append(f"{'all':<10} {sum(d for _, d in self.tumors):>8} "
                     f"{len(self.tumors):>6} {shown:>12}")
        lines.append(f"false positives: {self.false_positives}")
        return "\n".join(lines)


def detect(gt: LabelVolume, pred: LabelVolume, min_overlap_fraction: float = 0.1,
           connectivity: int = 26) -> DetectionReport:
    """Match ground-truth tumor components against a predicted tumor mask.

    A tumor counts as detected when at least ``min_overlap_fraction`` of its
    voxels are covered by the predicted tumor mask. Predicted components that
    touch no ground-truth tumor are false positives.
    """
    require_same_geometry(gt, pred, "gt and prediction")
    gt_comps = label_components(gt.data == 2, gt.spacing, connectivity)
    pred_mask = pred.data == 2

    tumors = []
    for cid in range(1, gt_comps.count + 1):
        comp = gt_comps.labels == cid
        overlap = int((comp & pred_mask).sum()) / int(comp.sum())
        tumors.append((float(gt_comps.radii_mm[cid - 1]), overlap >= min_overlap_fraction))

    sensitivity = {}
    for name, lo, hi in COARSE_BUCKETS + FINE_BUCKETS:
        in_bucket = [det for r, det in tumors if lo <= r < hi]
        total = len(in_bucket)
        det = sum(in_bucket)
        sensitivity[name] = (det, total, det / total if total else None)

    pred_comps = label_components(pred_mask, pred.spacing, connectivity)
    gt_mask = gt.data == 2
    false_positives = sum(
        1
        for cid in range(1, pred_comps.count + 1)
        if not (gt_mask & (pred_comps.labels == cid)).any()
    )
    return DetectionReport(tumors, sensitivity, false_positives, min_overlap_fraction)


# ---------------------------------------------------------------------------
# Visual reader-study tallies


@dataclass(frozen=True)
class TuringCounts:
    """2x3 confusion counts of a reader session (truth x judgment)."""

    real_as_real: int
    real_as_synthetic: int
    synthetic_as_real: int
    synthetic_as_synthetic: int
    real_unsure: int = 0
    synthetic_unsure: int = 0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def definite(self) -> int:
        return (self.real_as_real + self.real_as_synthetic
                + self.synthetic_as_real + self.synthetic_as_synthetic)

    @property
    def unsure(self) -> int:
        return self.real_unsure + self.synthetic_unsure


@dataclass(frozen=True)
class TuringTally:
    """Session metrics over definite answers; synthetic is the positive class."""

    counts: TuringCounts
    accuracy: float
    sensitivity: float | None
    specificity: float | None

    def to_dict(self) -> dict:
        return {
            "counts": dict(self.counts.__dict__),
            "definite": self.counts.definite,
            "unsure": self.counts.unsure,
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
        }


def turing_metrics(counts: TuringCounts) -> TuringTally:
    """Accuracy/sensitivity/specificity over definite answers only.

    Sensitivity treats synthetic scans as the positive class (fraction of
    synthetic scans recognized as synthetic); specificity is the fraction of
    real scans recognized as real.
    """
    definite = counts.definite
    if definite == 0:
        raise UndefinedMetricsError("no definite answers; metrics are undefined")
    accuracy = (counts.real_as_real + counts.synthetic_as_synthetic) / definite
    synt_definite = counts.synthetic_as_real + counts.synthetic_as_synthetic
    real_definite = counts.real_as_real + counts.real_as_synthetic
    sensitivity = counts.synthetic_as_synthetic / synt_definite if synt_definite else None
    specificity = counts.real_as_real / real_definite if real_definite else None
    return TuringTally(counts, accuracy, sensitivity, specificity)
