"""Clustering evaluation: purity, Rand index, and mutual information
(natural log) of a predicted partition against the ground truth.
"""

import numpy as np

from .errors import UsageError


def _contingency(pred, true):
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise UsageError("pred and true must be 1-d arrays of equal length")
    if pred.size == 0:
        raise UsageError("empty partition")
    if pred.min() < 0 or true.min() < 0:
        raise UsageError("labels must be non-negative integers")
    table = np.zeros((pred.max() + 1, true.max() + 1), dtype=np.int64)
    np.add.at(table, (pred, true), 1)
    return table


def purity(pred, true) -> float:
    """Fraction of points in the dominant true class of their predicted
    cluster: (1/N) * sum over clusters of max true-class overlap."""
    table = _contingency(pred, true)
    return float(table.max(axis=1).sum() / table.sum())


def rand_index(pred, true) -> float:
    """Fraction of point pairs on which the two partitions agree (together
    in both, or apart in both)."""
    table = _contingency(pred, true)
    n = int(table.sum())
    if n < 2:
        raise UsageError("rand index needs at least 2 points")

    def pairs(counts):
        counts = counts.astype(np.float64)
        return float((counts * (counts - 1) / 2).sum())

    total = n * (n - 1) / 2
    same_same = pairs(table.ravel())
    pred_pairs = pairs(table.sum(axis=1))
    true_pairs = pairs(table.sum(axis=0))
    agreeing = total + 2 * same_same - pred_pairs - true_pairs
    return float(agreeing / total)


def mutual_information(pred, true) -> float:
    """Raw mutual information in nats: sum over non-empty intersections of
    (n_kj/N) * ln(N * n_kj / (n_k * n_j)). Empty intersections contribute
    zero."""
    table = _contingency(pred, true).astype(np.float64)
    n = table.sum()
    pk = table.sum(axis=1)
    pj = table.sum(axis=0)
    mi = 0.0
    rows, cols = np.nonzero(table)
    for k, j in zip(rows, cols):
        nkj = table[k, j]
        mi += (nkj / n) * np.log(n * nkj / (pk[k] * pj[j]))
    return float(max(mi, 0.0))
