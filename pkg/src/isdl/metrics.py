"""Multiclass evaluation: confusion matrix, one-vs-rest rates, ROC/AUC, top-k.

Per-class rates come from the one-vs-rest reduction of the confusion
matrix.  A per-class value that is undefined (zero denominator) is stored
as ``None``, left out of the macro mean, and listed in the report's
``flags``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ShapeError, UndefinedAUC

__all__ = [
    "confusion",
    "one_vs_rest",
    "accuracy",
    "per_class",
    "macro_sensitivity",
    "macro_specificity",
    "macro_f1",
    "roc_curve",
    "roc_auc",
    "macro_auc",
    "top_k_accuracy",
    "MetricsReport",
    "evaluate",
    "write_roc_csv",
    "round_floats",
]


def confusion(truth, pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if truth.shape != pred.shape:
        raise ShapeError(f"truth has {truth.size} labels, pred has {pred.size}")
    for name, v in (("truth", truth), ("pred", pred)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise ValueError(f"{name} labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def one_vs_rest(cm):
    """Per-class ``(TP, FN, FP, TN)`` arrays."""
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    tn = cm.sum() - tp - fn - fp
    return tp, fn, fp, tn


def _ratio(num, den):
    return [float(n) / float(d) if d > 0 else None for n, d in zip(num, den)]


def _mean_defined(values):
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("confusion matrix is empty")
    return float(np.trace(cm) / total)


def per_class(cm) -> dict:
    """Per-class sensitivity, specificity, precision and F1 (``None`` where undefined).

    F1 is ``2PR / (P + R)``, evaluated as ``2TP / (2TP + FP + FN)`` so that a
    class with support but no correct or incorrect predictions of it scores
    0 instead of being dropped.  It is undefined only for a class that is
    absent from both truth and predictions.
    """
    tp, fn, fp, tn = one_vs_rest(cm)
    return {
        "sensitivity": _ratio(tp, tp + fn),
        "specificity": _ratio(tn, fp + tn),
        "precision": _ratio(tp, tp + fp),
        "f1": _ratio(2 * tp, 2 * tp + fp + fn),
    }


def macro_sensitivity(cm) -> float:
    return _mean_defined(per_class(cm)["sensitivity"])


def macro_specificity(cm) -> float:
    return _mean_defined(per_class(cm)["specificity"])


def macro_f1(cm) -> float:
    return _mean_defined(per_class(cm)["f1"])


# --------------------------------------------------------------------------
# ROC

def roc_curve(scores, positives):
    """ROC points ``(fpr, tpr, threshold)`` sweeping thresholds from high to low.

    Tied scores form a single step, so the trapezoidal area under the
    curve gives tied positive/negative pairs half credit.  The first point
    is ``(0, 0)`` with threshold ``+inf``.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(positives, dtype=bool).reshape(-1)
    if s.shape != pos.shape:
        raise ShapeError("scores and positives differ in length")
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("need at least one positive and one negative")
    order = np.argsort(-s, kind="mergesort")
    s, pos = s[order], pos[order]
    last_of_run = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(pos)[last_of_run]
    fps = np.cumsum(~pos)[last_of_run]
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thr = np.r_[np.inf, s[last_of_run]]
    return fpr, tpr, thr


def roc_auc(scores, positives) -> float:
    fpr, tpr, _ = roc_curve(scores, positives)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def macro_auc(proba, truth):
    """One-vs-rest AUC per class and their mean over classes where it is defined.

    Returns ``(macro, per_class)`` with ``None`` for classes lacking
    positives or negatives in ``truth``.
    """
    proba = np.asarray(proba, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if proba.ndim != 2 or proba.shape[0] != truth.size:
        raise ShapeError("proba must be (n_samples, n_classes) matching truth")
    aucs = []
    for c in range(proba.shape[1]):
        try:
            aucs.append(roc_auc(proba[:, c], truth == c))
        except UndefinedAUC:
            aucs.append(None)
    return _mean_defined(aucs), aucs


def top_k_accuracy(proba, truth, k: int) -> float:
    """Fraction of rows whose true class is among the ``k`` largest probabilities.

    Equal probabilities rank the lower class index first.
    """
    proba = np.asarray(proba, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if not 1 <= k <= proba.shape[1]:
        raise ValueError(f"k must lie in 1..{proba.shape[1]}")
    if truth.size == 0:
        raise ValueError("no samples")
    top = np.argsort(-proba, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(top == truth[:, None], axis=1)))


# --------------------------------------------------------------------------
# report

@dataclass
class MetricsReport:
    accuracy: float
    macro_sensitivity: float | None
    macro_specificity: float | None
    macro_f1: float | None
    macro_auc: float | None
    per_class_auc: list
    top_k_accuracy: dict
    confusion_matrix: list
    per_class: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(round_floats(self.to_dict()), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["top_k_accuracy"] = {int(k): v for k, v in d["top_k_accuracy"].items()}
        return cls(**d)


def round_floats(obj):
    # %.8g keeps the serialized form stable and compact
    if isinstance(obj, float):
        return float("%.8g" % obj)
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def evaluate(proba, truth, class_names=None, ks=(1, 2)) -> MetricsReport:
    proba = np.asarray(proba, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    L = proba.shape[1]
    names = list(class_names) if class_names is not None else [str(c) for c in range(L)]
    cm = confusion(truth, np.argmax(proba, axis=1), L)
    pc = per_class(cm)
    mauc, aucs = macro_auc(proba, truth)
    flags = []
    for key, values in list(pc.items()) + [("auc", aucs)]:
        flags += [f"{key} undefined for class {names[c]}" for c, v in enumerate(values) if v is None]
    return MetricsReport(
        accuracy=accuracy(cm),
        macro_sensitivity=_mean_defined(pc["sensitivity"]),
        macro_specificity=_mean_defined(pc["specificity"]),
        macro_f1=_mean_defined(pc["f1"]),
        macro_auc=mauc,
        per_class_auc=aucs,
        top_k_accuracy={k: top_k_accuracy(proba, truth, k) for k in ks if k <= L},
        confusion_matrix=cm.tolist(),
        per_class=pc,
        flags=flags,
    )


def write_roc_csv(path, scores, positives) -> None:
    fpr, tpr, thr = roc_curve(scores, positives)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for a, b, t in zip(fpr, tpr, thr):
            w.writerow(["%.8g" % a, "%.8g" % b, "inf" if np.isinf(t) else "%.8g" % t])
