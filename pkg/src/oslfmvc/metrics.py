"""External clustering metrics: ACC, NMI and purity."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = ["contingency", "accuracy", "nmi", "purity", "evaluate"]


def _check(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError("length mismatch: %d predicted vs %d true labels"
                         % (pred.size, truth.size))
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, truth


def contingency(pred, truth) -> np.ndarray:
    """Counts matrix, rows = predicted clusters, columns = true classes."""
    pred, truth = _check(pred, truth)
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def accuracy(pred, truth) -> float:
    """Best one-to-one cluster-to-class matching accuracy (Hungarian)."""
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information over sqrt(H(pred) * H(truth)), natural log."""
    table = contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_true = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(min(max(mi / np.sqrt(h_pred * h_true), 0.0), 1.0))


def purity(pred, truth) -> float:
    table = contingency(pred, truth)
    return float(table.max(axis=1).sum() / table.sum())


def evaluate(pred, truth) -> dict:
    return {"acc": accuracy(pred, truth), "nmi": nmi(pred, truth),
            "purity": purity(pred, truth)}
