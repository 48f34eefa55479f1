"""Binary classification metrics for BIBO predictions.

The positive class is BI (encoded 1). Precision, recall, F1, accuracy and
false-positive rate come from the confusion matrix; AUC is the Mann-Whitney
statistic with half credit for ties, so a constant-score predictor scores
exactly 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

BI = 1
BO = 0


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


class Scores(NamedTuple):
    precision: float
    recall: float
    f1: float
    accuracy: float
    fpr: float
    degenerate: frozenset


def confusion(labels, predictions, positive=BI) -> ConfusionMatrix:
    """Count TP/TN/FP/FN of ``predictions`` against ``labels``."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise ValueError(
            f"length mismatch: {labels.shape[0]} labels vs {predictions.shape[0]} predictions"
        )
    if labels.size == 0:
        raise ValueError("cannot build a confusion matrix from zero rows")
    pos_true = labels == positive
    pos_pred = predictions == positive
    tp = int(np.count_nonzero(pos_true & pos_pred))
    fn = int(np.count_nonzero(pos_true & ~pos_pred))
    fp = int(np.count_nonzero(~pos_true & pos_pred))
    tn = int(labels.size - tp - fn - fp)
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def _ratio(num, den, name, degenerate):
    if den == 0:
        degenerate.add(name)
        return 0.0
    return num / den


def prf1a(cm: ConfusionMatrix) -> Scores:
    """Precision, recall (TPR), F1, accuracy and FPR of a confusion matrix.

    Any 0/0 ratio evaluates to 0 and its name is listed in
    ``Scores.degenerate``.
    """
    degenerate: set[str] = set()
    p = _ratio(cm.tp, cm.tp + cm.fp, "precision", degenerate)
    r = _ratio(cm.tp, cm.tp + cm.fn, "recall", degenerate)
    if p + r == 0:
        degenerate.add("f1")
        f1 = 0.0
    else:
        f1 = 2 * p * r / (p + r)
    a = _ratio(cm.tp + cm.tn, cm.total, "accuracy", degenerate)
    fpr = _ratio(cm.fp, cm.tn + cm.fp, "fpr", degenerate)
    return Scores(p, r, f1, a, fpr, frozenset(degenerate))


def _midranks(x):
    # average rank (1-based) of each value, ties share the mean rank
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    boundaries = np.flatnonzero(np.diff(xs)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [x.size]))
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auc(labels, scores) -> float:
    """Area under the ROC curve as P(s_pos > s_neg) + 0.5 P(s_pos == s_neg).

    Returns NaN when ``labels`` holds a single class, since AUC is undefined
    there; callers are expected to flag such evaluations rather than treat
    them as a score.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError("labels and scores must have the same length")
    pos = labels == BI
    n_pos = int(np.count_nonzero(pos))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = _midranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(labels, scores):
    """ROC points (fpr, tpr) over every distinct score threshold.

    Thresholds are visited from the highest score down; tied scores enter
    together, which makes the trapezoidal area equal to the half-credit AUC.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    pos = labels == BI
    n_pos = np.count_nonzero(pos)
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC curve needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = pos[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = (last_of_group + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    return fpr, tpr


def trapezoid_auc(fpr, tpr) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass
class EvalRecord:
    """Metrics of one (sensor, model, setting, error rate, draw) cell."""

    sensor: str
    model: str
    setting: str
    lam: float
    draw: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    fpr: float
    auc: float
    flip_fraction: float = 0.0
    flags: tuple = ()
    lineage: tuple = field(default=(), compare=False)


def evaluate(labels, scores, threshold=0.5, **context) -> EvalRecord:
    """Score ``scores`` against ``labels``; predictions are ``score > threshold``.

    Flags: ``single_class`` when AUC is undefined, ``degenerate:<metric>`` for
    each 0/0 ratio.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    preds = np.where(scores > threshold, BI, BO)
    s = prf1a(confusion(labels, preds))
    a = auc(labels, scores)
    flags = [f"degenerate:{name}" for name in sorted(s.degenerate)]
    if math.isnan(a):
        flags.insert(0, "single_class")
    context.setdefault("flags", ())
    flags = tuple(context.pop("flags")) + tuple(flags)
    return EvalRecord(
        precision=s.precision,
        recall=s.recall,
        f1=s.f1,
        accuracy=s.accuracy,
        fpr=s.fpr,
        auc=a,
        flags=flags,
        **context,
    )
