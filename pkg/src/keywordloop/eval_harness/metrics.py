"""Ranking and classification metrics.

The area under the precision-recall curve is computed as non-interpolated
average precision: the mean of precision-at-k over the ranks k that hold a
positive, ranking by descending score with ties kept in input order.
"""

from __future__ import annotations

import math

import numpy as np


def auc_pr(scores, labels) -> float:
    """Average precision in [0, 1]; requires at least one positive label."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D sequences of equal length")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    cum_pos = np.cumsum(ranked)
    ranks = np.arange(1, scores.size + 1)
    precision_at_pos = cum_pos[ranked == 1] / ranks[ranked == 1]
    # fsum: correctly rounded, so reference implementations agree exactly
    return math.fsum(precision_at_pos) / n_pos


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of items where (score >= threshold) matches the label."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D sequences of equal length")
    if scores.size == 0:
        raise ValueError("accuracy is undefined on empty input")
    predicted = (scores >= threshold).astype(np.int64)
    return float((predicted == labels).mean())
