"""Shared fixtures and independent reference implementations.

The naive_* functions materialize resampled ensembles and recompute every
statistic from its definition; they deliberately share no code with the
package's streaming kernels.
"""

from __future__ import annotations


import numpy as np
import pytest

import rfconverge as rf


@pytest.fixture(scope="session")
def friedman_small() -> rf.Dataset:
    return rf.generate_synthetic(rf.SyntheticSpec("friedman1", 120, 10, 1.0, seed=7))


@pytest.fixture(scope="session")
def friedman_eval() -> rf.Dataset:
    return rf.generate_synthetic(rf.SyntheticSpec("friedman1", 80, 10, 1.0, seed=8))


def naive_psi_holdout(pred: np.ndarray, labels: np.ndarray) -> float:
    """Mean squared error of the plain ensemble average, from the definition."""
    avg = pred.mean(axis=0)
    return float(np.mean((labels - avg) ** 2))


def naive_z_holdout(pred: np.ndarray, labels: np.ndarray, resample: np.ndarray) -> float:
    """Materialize the resampled tree list and recompute psi from scratch."""
    return naive_psi_holdout(pred[resample], labels) - naive_psi_holdout(pred, labels)


def naive_psi_oob(pred: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """OOB estimate with the prediction-equals-label fallback, per point."""
    total = 0.0
    for j in range(labels.size):
        ix = np.flatnonzero(mask[:, j])
        fitted = labels[j] if ix.size == 0 else float(pred[ix, j].mean())
        total += (labels[j] - fitted) ** 2
    return total / labels.size


def naive_z_oob(
    pred: np.ndarray, labels: np.ndarray, mask: np.ndarray, resample: np.ndarray
) -> float:
    """Resampled trees carry their own OOB memberships along."""
    star = naive_psi_oob(pred[resample], labels, mask[resample])
    return star - naive_psi_oob(pred, labels, mask)


def naive_vi_eps(vi: np.ndarray, resample: np.ndarray) -> float:
    return float(np.max(np.abs(vi[resample].mean(axis=0) - vi.mean(axis=0))))


def naive_quantile(values, level: float) -> float:
    """inf-form quantile: smallest sorted value whose rank reaches B * level.

    Same float-product convention as the package, evaluated by scanning
    ranks instead of computing a ceiling.
    """
    vals = sorted(float(v) for v in values)
    B = len(vals)
    for k, v in enumerate(vals, start=1):
        if k >= B * level:
            return v
    return vals[-1]


def brute_force_best_split(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, min_leaf: int
) -> tuple[int, float, float] | None:
    """Exhaustive weighted-SSE split search over all columns and midpoints.

    Returns (column, threshold, children_sse) with ties resolved to the
    smallest column then smallest threshold, or None when no valid split
    strictly reduces the SSE.
    """

    def wsse(rows: np.ndarray) -> float:
        ww = w[rows].astype(float)
        mean = np.average(y[rows], weights=ww)
        return float(np.sum(ww * (y[rows] - mean) ** 2))

    rows = np.flatnonzero(w > 0)
    parent = wsse(rows)
    best = None
    for c in range(X.shape[1]):
        for thr in np.unique(X[rows, c]):
            lo = rows[X[rows, c] <= thr]
            hi = rows[X[rows, c] > thr]
            if lo.size == 0 or hi.size == 0:
                continue
            gap_hi = X[hi, c].min()
            mid = (thr + gap_hi) / 2.0
            if w[lo].sum() < min_leaf or w[hi].sum() < min_leaf:
                continue
            children = wsse(lo) + wsse(hi)
            if children >= parent:
                continue
            if best is None or children < best[2] or (
                children == best[2] and (c, mid) < (best[0], best[1])
            ):
                best = (c, mid, children)
    return best


def routed_leaf_rows(tree: rf.RegressionTree, X: np.ndarray) -> np.ndarray:
    """Leaf node index reached by each row, via independent routing."""
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while tree.feature[node] >= 0:
            if X[i, tree.feature[node]] <= tree.threshold[node]:
                node = tree.left[node]
            else:
                node = tree.right[node]
        out[i] = node
    return out


def all_ordered_resamples(t: int):
    """Every ordered with-replacement resample of size t from range(t)."""
    idx = np.indices((t,) * t).reshape(t, -1).T
    return [row.copy() for row in idx]
