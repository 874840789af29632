"""CART regression trees with per-split random feature subsampling.

The learner is the classic greedy one: at each node draw ``mtry`` candidate
columns, find the (column, threshold) pair minimizing the weighted sum of
squared errors of the two children over every boundary between adjacent
distinct sorted values, and recurse. Row weights are bag multiplicities, so
the same learner serves plain CART (all ones) and bagged resamples.

Determinism contract: refitting with identical (data, weights, params, seed)
reproduces the identical tree on any platform. Ties between equal-SSE splits
go to the smallest column index, then the smallest threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._rng import MASK64
from .data import Dataset

_UNBOUNDED_DEPTH = 1 << 62


@dataclass(frozen=True)
class TreeParams:
    """Knobs of the base learner.

    mtry=None resolves to ceil(p/3), the standard regression-forest default;
    max_depth=None grows until the leaf-size / purity rules stop the split.
    """

    mtry: int | None = None
    min_leaf: int = 5
    max_depth: int | None = None

    def __post_init__(self):
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")

    def resolved_mtry(self, p: int) -> int:
        m = math.ceil(p / 3) if self.mtry is None else self.mtry
        if m > p:
            raise ValueError(f"mtry={m} exceeds feature count p={p}")
        return m


@dataclass(frozen=True)
class RegressionTree:
    """Immutable binary regression tree in packed-array form.

    feature[k] >= 0 marks an internal node splitting on that column at
    threshold[k] (ties route left); feature[k] == -1 marks a leaf whose
    prediction is value[k]. Node 0 is the root. count[k] is the total bag
    multiplicity of the training rows that reached node k.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected shape (m, {self.n_features}), got {X.shape}")
        if not np.isfinite(X).all():
            raise ValueError("query points must be finite")
        return kernels.predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, X
        )

    def to_dict(self) -> dict:
        nodes = []
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                nodes.append(
                    {
                        "split_var": int(self.feature[k]),
                        "threshold": float(self.threshold[k]),
                        "left": int(self.left[k]),
                        "right": int(self.right[k]),
                    }
                )
            else:
                nodes.append({"value": float(self.value[k]), "count": int(self.count[k])})
        return {"root": 0, "n_features": self.n_features, "nodes": nodes}

    @classmethod
    def from_dict(cls, obj: dict) -> "RegressionTree":
        nodes = obj["nodes"]
        nn = len(nodes)
        feature = np.full(nn, -1, np.int64)
        threshold = np.zeros(nn, np.float64)
        left = np.full(nn, -1, np.int64)
        right = np.full(nn, -1, np.int64)
        value = np.zeros(nn, np.float64)
        count = np.zeros(nn, np.int64)
        for k, nd in enumerate(nodes):
            if "split_var" in nd:
                feature[k] = nd["split_var"]
                threshold[k] = nd["threshold"]
                left[k] = nd["left"]
                right[k] = nd["right"]
            else:
                value[k] = nd["value"]
                count[k] = nd["count"]
        return cls(feature, threshold, left, right, value, count, int(obj["n_features"]))


def fit_tree(
    data: Dataset, row_weights: np.ndarray, params: TreeParams, seed: int
) -> RegressionTree:
    """Fit one CART tree on the weighted rows; weight 0 excludes a row."""
    w = np.ascontiguousarray(row_weights, np.int64)
    if w.shape != (data.n,):
        raise ValueError(f"row_weights shape {w.shape} does not match n={data.n}")
    if (w < 0).any():
        raise ValueError("row_weights must be nonnegative")
    rows = np.flatnonzero(w > 0).astype(np.int64)
    if rows.size == 0:
        raise ValueError("all row weights are zero")
    mtry = params.resolved_mtry(data.p)
    max_depth = _UNBOUNDED_DEPTH if params.max_depth is None else params.max_depth
    feature, threshold, left, right, value, count = kernels.fit_tree(
        data.features,
        data.labels,
        rows,
        w,
        np.int64(mtry),
        np.int64(params.min_leaf),
        np.int64(max_depth),
        np.uint64(seed & MASK64),
    )
    return RegressionTree(feature, threshold, left, right, value, count, data.p)


def predict_tree(tree: RegressionTree, x: np.ndarray) -> float:
    """Prediction at a single point; boundary equality routes left."""
    x = np.asarray(x, np.float64)
    if x.shape != (tree.n_features,):
        raise ValueError(f"expected a length-{tree.n_features} vector, got shape {x.shape}")
    return float(tree.predict_batch(x.reshape(1, -1))[0])


def impurity_importance(
    tree: RegressionTree, data: Dataset, row_weights: np.ndarray
) -> np.ndarray:
    """Summed weighted-SSE reduction per column over the tree's splits.

    Must be called with the (data, row_weights) the tree was fit on; columns
    never split accumulate exactly zero.
    """
    w = np.ascontiguousarray(row_weights, np.int64)
    if w.shape != (data.n,) or data.p != tree.n_features:
        raise ValueError("data/weights do not match the fitted tree")
    rows = np.flatnonzero(w > 0).astype(np.int64)
    return kernels.impurity_importance(
        tree.feature,
        tree.threshold,
        tree.left,
        tree.right,
        data.features,
        data.labels,
        rows,
        w,
        data.p,
    )
