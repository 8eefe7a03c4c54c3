"""Localization and event-recognition metrics.

The localization accuracy curve ``phi(t)`` is the fraction of clips whose
predicted location lies strictly within ``t`` feet of the truth; AUC is its
mean over ``t`` in [5, 50] ft, as a percentage.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .data import EVENT_CLASSES, EventLabel
from .rink import FIVE_ZONE, NINE_ZONE, RinkPoint, ZonePartition, zone_of

T_MIN, T_MAX = 5.0, 50.0
PHI_GRID = np.arange(int(T_MIN), int(T_MAX) + 1, dtype=np.float64)


def _errors(preds: Sequence[RinkPoint], gts: Sequence[RinkPoint], axis: str = "both") -> np.ndarray:
    if len(preds) == 0 or len(preds) != len(gts):
        raise ValueError(f"need equal-length nonempty lists, got {len(preds)} predictions and {len(gts)} ground truths")
    p = np.array([(q.w, q.h) for q in preds], dtype=np.float64)
    g = np.array([(q.w, q.h) for q in gts], dtype=np.float64)
    if axis == "both":
        return np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])
    if axis == "x":
        return np.abs(p[:, 0] - g[:, 0])
    if axis == "y":
        return np.abs(p[:, 1] - g[:, 1])
    raise ValueError(f"axis must be 'both', 'x' or 'y', got {axis!r}")


def phi(preds, gts, t: float, axis: str = "both") -> float:
    return float(np.mean(_errors(preds, gts, axis) < t))


def phi_curve(preds, gts, ts=PHI_GRID, axis: str = "both") -> np.ndarray:
    e = _errors(preds, gts, axis)
    return (e[None, :] < np.asarray(ts, dtype=np.float64)[:, None]).mean(axis=1)


def auc(preds, gts, axis: str = "both", method: str = "exact") -> float:
    """Normalized area under ``phi`` on [5, 50] ft, in percent.

    ``exact`` integrates the step function in closed form: a clip with error
    ``e`` is a hit on ``(e, 50]``. ``trapezoid`` uses the integer grid.
    """
    e = _errors(preds, gts, axis)
    if method == "exact":
        covered = T_MAX - np.clip(e, T_MIN, T_MAX)
        return float(100.0 * covered.mean() / (T_MAX - T_MIN))
    if method == "trapezoid":
        curve = phi_curve(preds, gts, PHI_GRID, axis)
        return float(100.0 * np.trapezoid(curve, PHI_GRID) / (T_MAX - T_MIN))
    raise ValueError(f"unknown integration method {method!r}")


@dataclass
class ZoneAccuracy:
    overall: float
    per_zone: Dict[int, Optional[float]]
    counts: Dict[int, int]


def zone_accuracy(preds, gts, partition: ZonePartition) -> ZoneAccuracy:
    """Percent of clips whose prediction falls in the truth's zone.

    Zones with no ground-truth clips are reported as ``None``.
    """
    _errors(preds, gts)
    zp = np.array([zone_of(p, partition) for p in preds])
    zg = np.array([zone_of(g, partition) for g in gts])
    hit = zp == zg
    per_zone, counts = {}, {}
    for z in range(len(partition)):
        mask = zg == z
        counts[z] = int(mask.sum())
        per_zone[z] = float(100.0 * hit[mask].mean()) if mask.any() else None
    return ZoneAccuracy(overall=float(100.0 * hit.mean()), per_zone=per_zone, counts=counts)


@dataclass
class PRF:
    precision: Dict[str, float]
    recall: Dict[str, float]
    f1: Dict[str, float]
    support: Dict[str, int]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: List[List[int]] = field(default_factory=list)


def confusion_matrix(pred_labels, gt_labels, classes=EVENT_CLASSES) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, g in zip(pred_labels, gt_labels):
        cm[index[g], index[p]] += 1
    return cm


def event_prf(pred_labels, gt_labels) -> PRF:
    """Per-class precision/recall/F1 in percent plus unweighted macro means.

    A class that is never predicted gets precision 0; F1 is 0 when both
    precision and recall are 0.
    """
    if len(pred_labels) == 0 or len(pred_labels) != len(gt_labels):
        raise ValueError("need equal-length nonempty label lists")
    preds = [EventLabel.parse(p) for p in pred_labels]
    gts = [EventLabel.parse(g) for g in gt_labels]
    cm = confusion_matrix(preds, gts)
    tp = np.diag(cm).astype(np.float64)
    pred_pos = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    prec = np.divide(tp, pred_pos, out=np.zeros_like(tp), where=pred_pos > 0)
    rec = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    names = [c.value for c in EVENT_CLASSES]
    return PRF(
        precision={n: 100.0 * v for n, v in zip(names, prec)},
        recall={n: 100.0 * v for n, v in zip(names, rec)},
        f1={n: 100.0 * v for n, v in zip(names, f1)},
        support={n: int(v) for n, v in zip(names, actual)},
        macro_precision=float(100.0 * prec.mean()),
        macro_recall=float(100.0 * rec.mean()),
        macro_f1=float(100.0 * f1.mean()),
        confusion=cm.tolist(),
    )


def decode_location(p_w, p_h) -> RinkPoint:
    """Argmax bin per axis mapped to its center; ties go to the lowest index."""
    p_w, p_h = np.asarray(p_w), np.asarray(p_h)
    return RinkPoint(float(np.argmax(p_w)) + 0.5, float(np.argmax(p_h)) + 0.5)


# -- report -------------------------------------------------------------------


@dataclass
class EvalReport:
    n: int
    auc: float
    auc_x: float
    auc_y: float
    phi_curve: Dict[str, float]
    zone5: dict
    zone9: dict
    event_prf: Optional[dict] = None

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
        return path


def _zone_json(z: ZoneAccuracy, partition: ZonePartition) -> dict:
    return {
        "overall": z.overall,
        "per_zone": {partition.labels[i]: v for i, v in z.per_zone.items() if v is not None},
        "counts": {partition.labels[i]: c for i, c in z.counts.items()},
    }


def evaluate(preds, gts, pred_events=None, gt_events=None) -> EvalReport:
    curve = phi_curve(preds, gts)
    prf = None
    if pred_events is not None and gt_events is not None:
        prf = asdict(event_prf(pred_events, gt_events))
    return EvalReport(
        n=len(preds),
        auc=auc(preds, gts),
        auc_x=auc(preds, gts, axis="x"),
        auc_y=auc(preds, gts, axis="y"),
        phi_curve={f"{t:g}": float(v) for t, v in zip(PHI_GRID, curve)},
        zone5=_zone_json(zone_accuracy(preds, gts, FIVE_ZONE), FIVE_ZONE),
        zone9=_zone_json(zone_accuracy(preds, gts, NINE_ZONE), NINE_ZONE),
        event_prf=prf,
    )


def write_phi_csv(path: Union[str, Path], preds, gts, ts=PHI_GRID) -> Path:
    path = Path(path)
    curves = {a: phi_curve(preds, gts, ts, a) for a in ("both", "x", "y")}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "phi", "phi_x", "phi_y"])
        for i, t in enumerate(ts):
            w.writerow([f"{t:g}", f"{curves['both'][i]:.6f}", f"{curves['x'][i]:.6f}", f"{curves['y'][i]:.6f}"])
    return path
