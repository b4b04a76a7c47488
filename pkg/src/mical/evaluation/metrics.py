"""Ranking and detection metrics for binary seizure labels."""

import warnings

import numpy as np
from scipy.stats import rankdata

__all__ = ["auc_roc", "auc_pr", "f1", "precision_recall_f1"]


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary")
    return scores, labels.astype(np.int64)


def auc_roc(scores, labels):
    """P(random positive outscores random negative), ties counted as 1/2."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC-ROC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pr(scores, labels):
    """Step-wise area under the precision-recall curve (average precision).

    Tied scores form a single threshold.
    """
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUC-PR needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def precision_recall_f1(predictions, labels):
    """Dict with precision, recall, f1 and a ``degenerate`` flag (P + R == 0)."""
    pred = np.asarray(predictions).astype(np.int64)
    _, labels = _check(pred.astype(np.float64), labels)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return {"precision": precision, "recall": recall, "f1": 0.0, "degenerate": True}
    return {
        "precision": precision,
        "recall": recall,
        "f1": 2 * precision * recall / (precision + recall),
        "degenerate": False,
    }


def f1(predictions, labels):
    out = precision_recall_f1(predictions, labels)
    if out["degenerate"]:
        warnings.warn("F1 undefined (precision + recall = 0); reporting 0", RuntimeWarning, stacklevel=2)
    return out["f1"]
