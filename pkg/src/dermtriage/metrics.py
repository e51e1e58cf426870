"""Evaluation metrics for two-class lesion predictions.

Implements the usual confusion-count metrics plus log loss and rank-based
AUC directly, so results are reproducible from first principles rather
than delegated to a third-party scorer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasetio import LABELS
from .errors import InputError, ParseError, UndefinedRateError
from .inference import argmax_label, validate_probs

__all__ = [
    "LabeledPrediction",
    "ConfusionMatrix",
    "ClassMetrics",
    "MetricsReport",
    "confusion",
    "summarize",
    "roc_curve",
    "per_class_rates",
    "rates_table",
    "parse_prediction_lines",
    "load_predictions",
    "render_summary",
    "render_rates",
]

LOG_CLIP = 1e-15


@dataclass(frozen=True)
class LabeledPrediction:
    """A scored sample: identifier, true class, predicted distribution."""

    sample_id: str
    truth: str
    probs: dict

    def __post_init__(self):
        if self.truth not in LABELS:
            raise InputError(f"unknown truth label: {self.truth!r}")
        validate_probs(self.probs)

    @property
    def predicted(self):
        return argmax_label(self.probs)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts for one positive class."""

    positive_class: str
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if self.positive_class not in LABELS:
            raise InputError(f"unknown class: {self.positive_class!r}")
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise InputError(f"negative count: {name}")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def confusion(samples, positive_class):
    if not samples:
        raise InputError("no samples")
    tp = fp = tn = fn = 0
    for sample in samples:
        hit = sample.predicted == positive_class
        real = sample.truth == positive_class
        if hit and real:
            tp += 1
        elif hit and not real:
            fp += 1
        elif not hit and real:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(positive_class, tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
        }


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict
    accuracy: float
    log_loss: float
    auc: float | None

    def to_dict(self):
        return {
            "per_class": {k: v.to_dict() for k, v in self.per_class.items()},
            "accuracy": self.accuracy,
            "log_loss": self.log_loss,
            "auc": self.auc,
        }


def _safe_div(num, den):
    return num / den if den > 0 else 0.0


def _class_metrics(samples, label):
    cm = confusion(samples, label)
    precision = _safe_div(cm.tp, cm.tp + cm.fp)
    recall = _safe_div(cm.tp, cm.tp + cm.fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return ClassMetrics(precision, recall, f1, support=cm.tp + cm.fn)


def _log_loss(samples):
    total = 0.0
    for sample in samples:
        p = min(max(sample.probs[sample.truth], LOG_CLIP), 1.0 - LOG_CLIP)
        total += math.log(p)
    return -total / len(samples)


def _average_ranks(scores):
    """1-based ranks; tied scores share the mean of their rank range."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _rank_auc(samples, positive_class):
    scores = np.asarray([s.probs[positive_class] for s in samples])
    positives = np.asarray([s.truth == positive_class for s in samples])
    n_pos = int(positives.sum())
    n_neg = len(samples) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def summarize(samples):
    """Per-class precision/recall/F1/support plus accuracy, log loss, AUC.

    AUC treats BCC as the positive class and uses the rank statistic with
    average ranks on ties. It is None when only one class is present.
    """
    if not samples:
        raise InputError("no samples")
    correct = sum(1 for s in samples if s.predicted == s.truth)
    return MetricsReport(
        per_class={label: _class_metrics(samples, label) for label in LABELS},
        accuracy=correct / len(samples),
        log_loss=_log_loss(samples),
        auc=_rank_auc(samples, "BCC"),
    )


def roc_curve(samples, positive_class="BCC"):
    """ROC staircase points as (fpr, tpr, threshold) triples.

    Thresholds descend over the distinct scores; the first point is
    (0, 0) at threshold +inf. Trapezoidal area under the curve equals the
    rank-statistic AUC.
    """
    if not samples:
        raise InputError("no samples")
    scores = np.asarray([s.probs[positive_class] for s in samples])
    positives = np.asarray([s.truth == positive_class for s in samples])
    n_pos = int(positives.sum())
    n_neg = len(samples) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("ROC needs both classes present")
    order = np.argsort(-scores, kind="mergesort")
    points = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    i = 0
    while i < len(order):
        threshold = scores[order[i]]
        while i < len(order) and scores[order[i]] == threshold:
            if positives[order[i]]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg, tp / n_pos, float(threshold)))
    return points


def per_class_rates(cm):
    """Percentage rates for one class of a confusion matrix.

    tp_rate = 100 * tp / (tp + fn), fn_rate its complement, and the
    error rate for a class equals its false negative rate. Zero support
    raises UndefinedRateError.
    """
    support = cm.tp + cm.fn
    if support == 0:
        raise UndefinedRateError(
            f"no samples of class {cm.positive_class}; rates undefined"
        )
    tp_rate = 100.0 * cm.tp / support
    fn_rate = 100.0 * cm.fn / support
    return {
        "class": cm.positive_class,
        "tp_rate": tp_rate,
        "fn_rate": fn_rate,
        "error_rate": fn_rate,
    }


def rates_table(samples):
    """Per-class percentage rates for every class in label order."""
    return [per_class_rates(confusion(samples, label)) for label in LABELS]


# ---------------------------------------------------------------------------
# Prediction files


def _parse_prediction_line(line, lineno, seen_ids):
    parts = [piece.strip() for piece in line.split(",")]
    if len(parts) != 2 + len(LABELS):
        raise ParseError(
            f"line {lineno}: expected 'id,truth,p_nv,p_bcc'", line=lineno
        )
    sample_id, truth = parts[0], parts[1]
    if not sample_id:
        raise ParseError(f"line {lineno}: empty sample id", line=lineno)
    if sample_id in seen_ids:
        raise ParseError(f"line {lineno}: duplicate sample id {sample_id!r}", line=lineno)
    if truth not in LABELS:
        raise ParseError(f"line {lineno}: unknown truth label {truth!r}", line=lineno)
    try:
        values = [float(piece) for piece in parts[2:]]
    except ValueError as exc:
        raise ParseError(f"line {lineno}: bad probability: {exc}", line=lineno)
    probs = dict(zip(LABELS, values))
    try:
        validate_probs(probs)
    except InputError as exc:
        raise ParseError(f"line {lineno}: {exc}", line=lineno)
    return LabeledPrediction(sample_id, truth, probs)


def parse_prediction_lines(lines):
    """Parse prediction rows ``id,truth,p_nv,p_bcc`` from an iterable."""
    samples = []
    seen = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        sample = _parse_prediction_line(line, lineno, seen)
        seen.add(sample.sample_id)
        samples.append(sample)
    if not samples:
        raise ParseError("prediction file has no samples")
    return samples


def load_predictions(path):
    with open(path, "r", encoding="utf-8") as handle:
        return parse_prediction_lines(handle)


# ---------------------------------------------------------------------------
# Text rendering


def render_summary(report):
    lines = ["class  precision  recall  f1      support"]
    for label in LABELS:
        m = report.per_class[label]
        lines.append(
            f"{label:<5}  {m.precision:9.3f}  {m.recall:6.3f}  {m.f1:6.3f}  {m.support:7d}"
        )
    lines.append(f"accuracy: {report.accuracy:.3f}")
    lines.append(f"log loss: {report.log_loss:.3f}")
    if report.auc is not None:
        lines.append(f"auc: {report.auc:.3f}")
    return "\n".join(lines)


def render_rates(rows):
    lines = ["class  tp%     fn%     err%"]
    for row in rows:
        lines.append(
            f"{row['class']:<5}  {row['tp_rate']:6.1f}  {row['fn_rate']:6.1f}  "
            f"{row['error_rate']:6.1f}"
        )
    return "\n".join(lines)
