"""Threshold-free metrics: exact AUC-ROC, trapezoidal AUC-PR and MRR."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise ValueError("AUC needs both positive and negative labels")
    return scores, labels, n_pos


def auc_roc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, ties counted 1/2."""
    scores, labels, n_pos = _check(scores, labels)
    n_neg = len(labels) - n_pos
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_curve(scores, labels):
    """Precision/recall at each distinct score threshold, highest first."""
    scores, labels, n_pos = _check(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]  # end of each tie group
    tp, fp = tp[last], fp[last]
    return tp / (tp + fp), tp / n_pos


def auc_pr(scores, labels) -> float:
    """Trapezoidal area under the precision-recall curve.

    The curve starts at recall 0 with the precision of the first threshold.
    """
    precision, recall = pr_curve(scores, labels)
    r = np.r_[0.0, recall]
    p = np.r_[precision[0], precision]
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


def mrr(ranks) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranks")
    if np.any(ranks < 1):
        raise ValueError("ranks start at 1")
    return float(np.mean(1.0 / ranks))


def hits_at(ranks, n: int) -> float:
    return float(np.mean(np.asarray(ranks) <= n))
