"""Confusion-matrix metrics and ROC analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gazefuse.errors import InsufficientDataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.tn, self.fp) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @classmethod
    def from_predictions(cls, labels, predictions) -> "ConfusionMatrix":
        y = np.asarray(labels).astype(bool)
        p = np.asarray(predictions).astype(bool)
        return cls(int(np.sum(y & p)), int(np.sum(y & ~p)), int(np.sum(~y & ~p)), int(np.sum(~y & p)))

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.positives + self.negatives


def _ratio(num: float, den: float, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(f"{name}_undefined")
        return 0.0
    return num / den


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    sensitivity: float
    specificity: float
    f1: float
    auc: float | None
    threshold: float
    roc_points: list[tuple[float, float]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.confusion.total,
            "threshold": self.threshold,
            "confusion": {"tp": self.confusion.tp, "fn": self.confusion.fn, "tn": self.confusion.tn, "fp": self.confusion.fp},
            "accuracy": self.accuracy,
            "precision": self.precision,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "f1": self.f1,
            "auc": self.auc,
            "flags": list(self.flags),
        }


def metrics_from_confusion(cm: ConfusionMatrix, threshold: float = 0.5) -> EvalReport:
    """Accuracy, precision, sensitivity, specificity and F1; zero denominators give 0 and a flag."""
    flags: list[str] = []
    accuracy = _ratio(cm.tp + cm.tn, cm.total, "accuracy", flags)
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    sensitivity = _ratio(cm.tp, cm.tp + cm.fn, "sensitivity", flags)
    specificity = _ratio(cm.tn, cm.tn + cm.fp, "specificity", flags)
    f1 = _ratio(2 * precision * sensitivity, precision + sensitivity, "f1", flags)
    return EvalReport(cm, accuracy, precision, sensitivity, specificity, f1, None, threshold, [], flags)


@dataclass(frozen=True)
class RocCurve:
    points: list[tuple[float, float]]
    thresholds: list[float]
    auc: float


def roc_curve(scores, labels) -> RocCurve:
    """ROC points from a descending sweep over the distinct scores.

    Equal scores move the curve in one diagonal step, so the trapezoid
    area gives tied positive/negative pairs half credit.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be matching vectors")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise InsufficientDataError("ROC needs both classes present")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    distinct = np.flatnonzero(np.diff(s)) if len(s) > 1 else np.array([], dtype=int)
    ends = np.append(distinct, len(s) - 1)
    tps = np.cumsum(y)[ends]
    fps = np.cumsum(~y)[ends]
    tpr = np.concatenate([[0.0], tps / n_pos])
    fpr = np.concatenate([[0.0], fps / n_neg])
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    thresholds = [float("inf")] + [float(v) for v in s[ends]]
    return RocCurve([(float(a), float(b)) for a, b in zip(fpr, tpr)], thresholds, auc)


def evaluate_scores(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Report at ``threshold`` (predict positive when score >= threshold) plus ROC/AUC when defined."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise InsufficientDataError("cannot evaluate an empty set")
    report = metrics_from_confusion(ConfusionMatrix.from_predictions(labels, scores >= threshold), threshold)
    try:
        roc = roc_curve(scores, labels)
    except InsufficientDataError:
        report.flags.append("auc_undefined_single_class")
    else:
        report.auc = roc.auc
        report.roc_points = roc.points
    return report
