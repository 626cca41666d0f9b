"""ROC AUC and F1."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import SingleClassLabels


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties get midranks)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be nonempty and aligned")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels("ROC AUC needs both positive and negative labels")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_roc_auc(proba, labels) -> float:
    """One-vs-rest AUC averaged over classes that occur with both outcomes."""
    proba = np.asarray(proba)
    labels = np.asarray(labels)
    aucs = []
    for k in range(proba.shape[1]):
        pos = labels == k
        if pos.any() and not pos.all():
            aucs.append(roc_auc(proba[:, k], pos))
    if not aucs:
        raise SingleClassLabels("ROC AUC needs at least two classes in the labels")
    return float(np.mean(aucs))


def binary_f1(predictions, labels, positive=1) -> float:
    pred = np.asarray(predictions) == positive
    true = np.asarray(labels) == positive
    tp = float(np.sum(pred & true))
    fp = float(np.sum(pred & ~true))
    fn = float(np.sum(~pred & true))
    if tp == 0.0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def f1_score(predictions, labels, positive=None) -> float:
    """F1 of ``positive``; macro-averaged over observed classes when ``positive`` is None."""
    if len(predictions) == 0:
        raise ValueError("F1 of an empty prediction set")
    if positive is not None:
        return binary_f1(predictions, labels, positive)
    classes = np.union1d(np.unique(predictions), np.unique(labels))
    return float(np.mean([binary_f1(predictions, labels, c) for c in classes]))
