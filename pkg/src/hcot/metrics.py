"""Tracking evaluation: IoU, center error, success/precision curves, AUC, DP_20.

Conventions are fixed so numbers are comparable across runs: the success
curve samples 21 evenly spaced overlap thresholds in [0, 1] inclusive and the
AUC is their mean; the precision curve samples integer pixel thresholds
0..50 and DP_20 is the value at 20 px. A frame counts as a success at
threshold t when IoU >= t, and as precise at threshold p when CLE <= p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import BBox

__all__ = [
    "SUCCESS_THRESHOLDS",
    "PRECISION_THRESHOLDS",
    "iou",
    "giou",
    "cle",
    "success_auc",
    "precision_dp",
    "SequenceEval",
    "EvalResult",
    "attribute_report",
    "aggregate",
]

SUCCESS_THRESHOLDS = np.round(np.linspace(0.0, 1.0, 21), 10)
PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)


def _intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    return max(0.0, iw) * max(0.0, ih)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the empty fraction of the enclosing box."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    ew = max(a.x2, b.x2) - min(a.x, b.x)
    eh = max(a.y2, b.y2) - min(a.y, b.y)
    enclosing = ew * eh
    return inter / union - (enclosing - union) / enclosing


def cle(a: BBox, b: BBox) -> float:
    """Center location error: Euclidean distance between box centers, px."""
    ax, ay = a.center
    bx, by = b.center
    return float(np.hypot(ax - bx, ay - by))


def success_auc(ious) -> tuple[np.ndarray, float]:
    """Success curve over the 21 overlap thresholds and its mean (the AUC)."""
    ious = np.asarray(ious, dtype=np.float64)
    if ious.size == 0:
        raise ValueError("success_auc of an empty IoU list")
    curve = (ious[None, :] >= SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
    return curve, float(curve.mean())


def precision_dp(cles, ref_threshold: float = 20.0) -> tuple[np.ndarray, float]:
    """Precision curve over 0..50 px thresholds and its value at ref_threshold."""
    cles = np.asarray(cles, dtype=np.float64)
    if cles.size == 0:
        raise ValueError("precision_dp of an empty CLE list")
    curve = (cles[None, :] <= PRECISION_THRESHOLDS[:, None]).mean(axis=1)
    return curve, float((cles <= ref_threshold).mean())


@dataclass(frozen=True)
class SequenceEval:
    """Per-frame overlap and center errors for one sequence."""

    name: str
    ious: tuple[float, ...]
    cles: tuple[float, ...]
    attributes: frozenset[str]

    @classmethod
    def from_boxes(cls, name, predictions, ground_truth, attributes) -> "SequenceEval":
        if len(predictions) != len(ground_truth):
            raise ValueError(
                f"{len(predictions)} predictions vs {len(ground_truth)} ground-truth boxes"
            )
        ious = tuple(iou(p, g) for p, g in zip(predictions, ground_truth))
        cles = tuple(cle(p, g) for p, g in zip(predictions, ground_truth))
        return cls(name, ious, cles, frozenset(attributes))


@dataclass(frozen=True)
class EvalResult:
    """Pooled evaluation: curves, AUC, DP_20, and per-attribute aggregates."""

    ious: tuple[float, ...]
    cles: tuple[float, ...]
    success_curve: np.ndarray
    precision_curve: np.ndarray
    auc: float
    dp20: float
    per_sequence: dict[str, dict[str, float]]
    per_attribute: dict[str, dict[str, float]]


def attribute_report(sequences: list[SequenceEval]) -> dict[str, dict[str, float]]:
    """Frame-weighted per-attribute AUC and DP_20.

    A sequence contributes all its frames to every attribute it carries, so
    the aggregate for an attribute is computed over the pooled frames of the
    sequences tagged with it.
    """
    report: dict[str, dict[str, float]] = {}
    tags = sorted({a for s in sequences for a in s.attributes})
    for tag in tags:
        tagged = [s for s in sequences if tag in s.attributes]
        ious = np.concatenate([s.ious for s in tagged])
        cles = np.concatenate([s.cles for s in tagged])
        _, auc = success_auc(ious)
        _, dp20 = precision_dp(cles)
        report[tag] = {
            "auc": auc,
            "dp20": dp20,
            "frames": int(ious.size),
            "sequences": len(tagged),
        }
    return report


def aggregate(sequences: list[SequenceEval]) -> EvalResult:
    """Pool sequences frame-weighted into one EvalResult."""
    if not sequences:
        raise ValueError("nothing to aggregate")
    ious = np.concatenate([s.ious for s in sequences])
    cles = np.concatenate([s.cles for s in sequences])
    success_curve, auc = success_auc(ious)
    precision_curve, dp20 = precision_dp(cles)
    per_sequence = {}
    for s in sequences:
        _, s_auc = success_auc(s.ious)
        _, s_dp = precision_dp(s.cles)
        per_sequence[s.name] = {"auc": s_auc, "dp20": s_dp, "frames": len(s.ious)}
    return EvalResult(
        ious=tuple(float(v) for v in ious),
        cles=tuple(float(v) for v in cles),
        success_curve=success_curve,
        precision_curve=precision_curve,
        auc=auc,
        dp20=dp20,
        per_sequence=per_sequence,
        per_attribute=attribute_report(sequences),
    )
