"""Evaluation metrics for imbalanced classification.

Labels and predictions are 1-based. "Minority classes" are the floor(L/2)
classes with the smallest *training* cardinality -- evaluation sets are
typically balanced, so the notion of minority must come from the training
distribution. Classes absent from an evaluation set are excluded from the
affected aggregates and flagged, never silently counted as zero.
"""

from dataclasses import dataclass

import numpy as np

GMEAN_FLOOR = 0.01


class MetricsError(ValueError):
    pass


def _check_pair(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise MetricsError(f"preds/labels shape mismatch: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise MetricsError("empty evaluation set")
    return preds, labels


def overall_accuracy(preds, labels):
    preds, labels = _check_pair(preds, labels)
    return float(np.mean(preds == labels))


def per_class_recall(preds, labels, n_classes):
    """Recall per class; NaN marks classes absent from ``labels``."""
    preds, labels = _check_pair(preds, labels)
    out = np.full(n_classes, np.nan)
    for k in range(1, n_classes + 1):
        sel = labels == k
        if sel.any():
            out[k - 1] = np.mean(preds[sel] == k)
    return out


def minority_classes(train_class_counts):
    """1-based indices of the floor(L/2) smallest training classes.

    Stable sort: among equal counts the smaller class index ranks first.
    """
    counts = np.asarray(train_class_counts)
    n = counts.size
    order = np.argsort(counts, kind="stable")
    return np.sort(order[: n // 2] + 1)


def minority_accuracy(preds, labels, train_class_counts):
    """Mean per-class recall over the minority classes present in labels."""
    counts = np.asarray(train_class_counts)
    recalls = per_class_recall(preds, labels, counts.size)
    minor = minority_classes(counts)
    vals = recalls[minor - 1]
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise MetricsError("no minority class present in the evaluation set")
    return float(vals.mean())


def gmean(recalls, floor=GMEAN_FLOOR):
    """Geometric mean of per-class recalls, each floored at ``floor``.

    NaN entries (absent classes) are excluded. The floor keeps one dead
    class from collapsing the score to zero.
    """
    r = np.asarray(recalls, dtype=np.float64)
    r = r[~np.isnan(r)]
    if r.size == 0:
        raise MetricsError("gmean of zero classes")
    return float(np.exp(np.mean(np.log(np.maximum(r, floor)))))


def confusion_matrix(preds, labels, n_classes, normalize=True):
    """counts[i, j] = #(true class i+1 predicted as j+1); rows normalized to
    sum 1 when the true class occurs, left all-zero otherwise."""
    preds, labels = _check_pair(preds, labels)
    counts = np.zeros((n_classes, n_classes))
    np.add.at(counts, (labels - 1, preds - 1), 1.0)
    if not normalize:
        return counts
    row = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, row, out=np.zeros_like(counts), where=row > 0)


def prediction_histogram(preds, n_classes):
    preds = np.asarray(preds)
    return np.bincount(preds, minlength=n_classes + 1)[1:].astype(np.int64)


def histogram_balance(counts):
    """max/min prediction count; the min is floored at 1 so a never-predicted
    class yields a large but finite statistic."""
    counts = np.asarray(counts, dtype=np.float64)
    return float(counts.max() / max(counts.min(), 1.0))


@dataclass
class MetricsReport:
    overall_accuracy: float
    minority_accuracy: float
    gmean: float
    per_class_recall: list
    confusion: list
    prediction_histogram: list
    histogram_balance: float
    minority_class_list: list
    missing_classes: list  # classes absent from the eval set, if any
    n_examples: int
    head: str = "balanced"

    def to_dict(self):
        rec = [None if np.isnan(r) else float(r) for r in self.per_class_recall]
        return {
            "overall_accuracy": self.overall_accuracy,
            "minority_accuracy": self.minority_accuracy,
            "gmean": self.gmean,
            "per_class_recall": rec,
            "confusion": self.confusion,
            "prediction_histogram": self.prediction_histogram,
            "histogram_balance": self.histogram_balance,
            "minority_class_list": self.minority_class_list,
            "missing_classes": self.missing_classes,
            "n_examples": self.n_examples,
            "head": self.head,
        }


def build_metrics_report(preds, labels, train_class_counts, head="balanced"):
    counts = np.asarray(train_class_counts)
    n_classes = counts.size
    recalls = per_class_recall(preds, labels, n_classes)
    missing = [int(k + 1) for k in np.flatnonzero(np.isnan(recalls))]
    hist = prediction_histogram(preds, n_classes)
    return MetricsReport(
        overall_accuracy=overall_accuracy(preds, labels),
        minority_accuracy=minority_accuracy(preds, labels, counts),
        gmean=gmean(recalls),
        per_class_recall=list(recalls),
        confusion=[[float(v) for v in row]
                   for row in confusion_matrix(preds, labels, n_classes)],
        prediction_histogram=[int(c) for c in hist],
        histogram_balance=histogram_balance(hist),
        minority_class_list=[int(k) for k in minority_classes(counts)],
        missing_classes=missing,
        n_examples=int(np.asarray(preds).size),
        head=head,
    )
