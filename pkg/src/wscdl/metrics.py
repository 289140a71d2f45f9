"""Multi-label evaluation, micro-averaged over every (bag, class) decision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wscdl.core import DataError


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    pr_auc: float
    threshold: float
    roc_curve: np.ndarray  # (n, 2) columns fpr, tpr
    pr_curve: np.ndarray  # (n, 2) columns recall, precision
    subset_accuracy: float = float("nan")


def dynamic_threshold(scores) -> float:
    """(max + min) / 2 over every score in the matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DataError("no scores to threshold")
    return float((scores.max() + scores.min()) / 2.0)


def binary_metrics(scores, labels, threshold: float):
    """(accuracy, precision, recall, f1) with decisions ``score >= threshold``,
    counted over the flattened matrix; undefined ratios fall back to 0."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have matching shapes")
    pred = scores >= threshold
    tp = int(np.sum(pred & labels))
    tn = int(np.sum(~pred & ~labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    accuracy = (tp + tn) / max(len(labels), 1)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return accuracy, precision, recall, f1


def subset_accuracy(scores, labels, threshold: float) -> float:
    """Fraction of bags whose entire label vector is predicted exactly."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pred = scores >= threshold
    return float(np.mean(np.all(pred == labels, axis=1)))


def _sweep_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct scores, plus +/- infinity."""
    distinct = np.unique(scores)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate([[np.inf], mids[::-1], [-np.inf]])


def roc_pr(scores, labels):
    """Micro-averaged ROC and PR curves with their areas.

    Returns (roc_curve, pr_curve, roc_auc, pr_auc).  ROC area uses the
    trapezoid rule (tied scores grouped, so it equals the Mann-Whitney
    statistic); PR area uses the rectangular step rule.  The PR curve gets
    an explicit (0, first precision) anchor since no finite threshold
    yields zero recall.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have matching shapes")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("both classes must be present for ROC/PR curves")

    roc_points = []
    pr_points = []
    for thr in _sweep_thresholds(scores):
        pred = scores >= thr
        tp = int(np.sum(pred & labels))
        fp = int(np.sum(pred & ~labels))
        roc_points.append((fp / n_neg, tp / n_pos))
        if tp + fp:
            pr_points.append((tp / n_pos, tp / (tp + fp)))
    roc_curve = np.array(roc_points)
    pr_curve = np.vstack([[(0.0, pr_points[0][1])], pr_points])

    roc_auc = float(np.trapezoid(roc_curve[:, 1], roc_curve[:, 0]))
    rec, prec = pr_curve[:, 0], pr_curve[:, 1]
    pr_auc = float(np.sum((rec[1:] - rec[:-1]) * prec[1:]))
    return roc_curve, pr_curve, roc_auc, pr_auc


def evaluate(scores, labels, threshold: float | None = None) -> EvalReport:
    """Full report at the dynamic threshold (or a caller-supplied one)."""
    if threshold is None:
        threshold = dynamic_threshold(scores)
    accuracy, precision, recall, f1 = binary_metrics(scores, labels, threshold)
    roc_curve, pr_curve, roc_auc, pr_auc = roc_pr(scores, labels)
    return EvalReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        roc_auc=roc_auc,
        pr_auc=pr_auc,
        threshold=threshold,
        roc_curve=roc_curve,
        pr_curve=pr_curve,
        subset_accuracy=subset_accuracy(scores, labels, threshold),
    )
