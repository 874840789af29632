"""Bagged ensembles of feature-subsampled CART trees.

Training draws, for each tree, a bootstrap bag of n rows (n uniform draws
with replacement, recorded as a multiplicity vector) and fits the tree on
those multiplicities. The bag rows double as the out-of-bag bookkeeping:
tree i is "blind" to exactly the rows with bag count zero.

Everything downstream of training consumes one of two sufficient statistics:
the per-tree prediction matrix on a set of evaluation points, or the per-tree
variable-importance matrix. Both serialize to CSV and to a compact binary
layout for reuse between CLI invocations.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from ._rng import seed_sequence
from ._util import parallel_map
from .cart import RegressionTree, TreeParams, fit_tree, impurity_importance
from .data import Dataset

_MAGIC = b"RFCM"
_KIND_PREDICTION = 1
_KIND_VI = {"impurity": 2, "permutation": 3}
_KIND_VI_REV = {v: k for k, v in _KIND_VI.items()}


@dataclass(frozen=True)
class Ensemble:
    """Ordered trees plus their bag multiplicities and the master seed."""

    trees: list[RegressionTree]
    bag_counts: np.ndarray  # (t, n) nonnegative ints, each row sums to n
    master_seed: int
    params: TreeParams

    @property
    def t(self) -> int:
        return len(self.trees)

    @property
    def n(self) -> int:
        return self.bag_counts.shape[1]

    def to_dict(self) -> dict:
        return {
            "master_seed": int(self.master_seed),
            "params": {
                "mtry": self.params.mtry,
                "min_leaf": self.params.min_leaf,
                "max_depth": self.params.max_depth,
            },
            "bag_counts": self.bag_counts.tolist(),
            "trees": [tr.to_dict() for tr in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Ensemble":
        params = TreeParams(**obj["params"])
        trees = [RegressionTree.from_dict(td) for td in obj["trees"]]
        return cls(trees, np.asarray(obj["bag_counts"], np.int64), int(obj["master_seed"]), params)


@dataclass(frozen=True)
class PredictionMatrix:
    """t x m per-tree predictions on m labeled evaluation points."""

    values: np.ndarray
    point_labels: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, np.float64)
        labs = np.ascontiguousarray(self.point_labels, np.float64)
        if vals.ndim != 2 or labs.ndim != 1 or labs.shape[0] != vals.shape[1]:
            raise ValueError(f"inconsistent shapes: values {vals.shape}, labels {labs.shape}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "point_labels", labs)

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def column_means(self) -> np.ndarray:
        """The averaged-ensemble prediction at each evaluation point."""
        return self.values.mean(axis=0)

    def residuals(self) -> np.ndarray:
        """Per-tree residuals label - prediction, shape (t, m)."""
        return self.point_labels[None, :] - self.values


@dataclass(frozen=True)
class ViMatrix:
    """t x p per-tree variable-importance vectors under one rule."""

    values: np.ndarray
    rule: str
    empty_oob_trees: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def __post_init__(self):
        if self.rule not in _KIND_VI:
            raise ValueError(f"unknown VI rule {self.rule!r}")
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, np.float64))
        object.__setattr__(
            self, "empty_oob_trees", np.asarray(self.empty_oob_trees, np.int64)
        )

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class OobStructure:
    """Boolean OOB mask plus, per training point, its sorted OOB tree indices."""

    mask: np.ndarray  # (t, n) True where the point is out-of-bag for the tree
    per_point: list[np.ndarray]

    def empty_fraction(self) -> float:
        """Fraction of training points that are in-bag for every tree."""
        return float(np.mean([ix.size == 0 for ix in self.per_point]))


def train_ensemble(
    data: Dataset, t: int, params: TreeParams, master_seed: int, threads: int = 1
) -> Ensemble:
    """Train t conditionally-i.i.d. trees by bagging.

    Tree i gets its own substream of (master_seed, i) for both the bag draw
    and the split-feature sampling, so the result is independent of training
    order and of the thread count.
    """
    if t < 1:
        raise ValueError(f"ensemble size must be >= 1, got {t}")
    params.resolved_mtry(data.p)  # fail fast before spawning workers
    n = data.n

    def build(i: int) -> tuple[np.ndarray, RegressionTree]:
        bag_ss, tree_ss = seed_sequence(master_seed, i).spawn(2)
        rng = np.random.Generator(np.random.PCG64(bag_ss))
        draws = rng.integers(0, n, size=n)
        counts = np.bincount(draws, minlength=n).astype(np.int64)
        tree_seed = int(tree_ss.generate_state(1, np.uint64)[0])
        return counts, fit_tree(data, counts, params, tree_seed)

    results = parallel_map(build, range(t), threads)
    bag_counts = np.stack([c for c, _ in results])
    trees = [tr for _, tr in results]
    return Ensemble(trees, bag_counts, int(master_seed), params)


def predict_matrix(
    ensemble: Ensemble, points: np.ndarray, labels: np.ndarray, threads: int = 1
) -> PredictionMatrix:
    """Evaluate every tree at every point; column means reproduce the
    ensemble average."""
    points = np.ascontiguousarray(points, np.float64)
    labels = np.ascontiguousarray(labels, np.float64)
    if points.ndim != 2 or labels.shape != (points.shape[0],):
        raise ValueError(f"points {points.shape} and labels {labels.shape} do not align")
    rows = parallel_map(lambda tr: tr.predict_batch(points), ensemble.trees, threads)
    values = (
        np.stack(rows) if rows and points.shape[0] else np.empty((ensemble.t, 0), np.float64)
    )
    return PredictionMatrix(values, labels)


def oob_structure(ensemble: Ensemble) -> OobStructure:
    """OOB mask and per-point index lists derived from the bag counts."""
    mask = ensemble.bag_counts == 0
    per_point = [np.flatnonzero(mask[:, j]).astype(np.int64) for j in range(mask.shape[1])]
    return OobStructure(mask, per_point)


def impurity_vi_matrix(ensemble: Ensemble, data: Dataset, threads: int = 1) -> ViMatrix:
    """Per-tree node-impurity importance, each row under its own bag weights."""
    rows = parallel_map(
        lambda i: impurity_importance(ensemble.trees[i], data, ensemble.bag_counts[i]),
        range(ensemble.t),
        threads,
    )
    return ViMatrix(np.stack(rows), "impurity")


def permutation_importance(
    ensemble: Ensemble, data: Dataset, seed: int, threads: int = 1
) -> ViMatrix:
    """OOB permutation importance, one permutation per (tree, variable).

    vi[i, l] is the tree's OOB MSE after permuting column l among its OOB
    rows minus its baseline OOB MSE. A tree with no OOB rows contributes a
    zero row and is flagged in empty_oob_trees.
    """
    p = data.p

    def one_tree(i: int) -> np.ndarray:
        oob_rows = np.flatnonzero(ensemble.bag_counts[i] == 0)
        if oob_rows.size == 0:
            return np.zeros(p, np.float64)
        tree = ensemble.trees[i]
        Xo = data.features[oob_rows]
        yo = data.labels[oob_rows]
        base = float(np.mean((yo - tree.predict_batch(Xo)) ** 2))
        out = np.empty(p, np.float64)
        for l in range(p):
            perm_rng = np.random.Generator(np.random.PCG64(seed_sequence(seed, i, l)))
            perm = perm_rng.permutation(oob_rows.size)
            Xp = Xo.copy()
            Xp[:, l] = Xo[perm, l]
            out[l] = float(np.mean((yo - tree.predict_batch(Xp)) ** 2)) - base
        return out

    rows = parallel_map(one_tree, range(ensemble.t), threads)
    empty = np.flatnonzero((ensemble.bag_counts != 0).all(axis=1)).astype(np.int64)
    return ViMatrix(np.stack(rows), "permutation", empty)


# ---------------------------------------------------------------------------
# Matrix serialization: CSV for inspection, compact binary for reuse.
# Binary layout: 16-byte header (magic "RFCM", u32 flags, u32 rows, u32 cols,
# little-endian) followed by rows*cols float64 row-major, then cols float64
# point labels when flag bit 0 is set. Flag bits 8..15 carry the matrix kind.


def _write_matrix(path: Path, kind: int, values: np.ndarray, labels: np.ndarray | None):
    flags = kind << 8 | (1 if labels is not None else 0)
    with path.open("wb") as fh:
        fh.write(struct.pack("<4sIII", _MAGIC, flags, values.shape[0], values.shape[1]))
        fh.write(np.ascontiguousarray(values, "<f8").tobytes())
        if labels is not None:
            fh.write(np.ascontiguousarray(labels, "<f8").tobytes())


def _read_matrix(path: Path) -> tuple[int, np.ndarray, np.ndarray | None]:
    raw = path.read_bytes()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated matrix file")
    magic, flags, rows, cols = struct.unpack("<4sIII", raw[:16])
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, "<f8", offset=16)
    need = rows * cols + (cols if flags & 1 else 0)
    if body.size != need:
        raise ValueError(f"{path}: payload size {body.size} != expected {need}")
    values = body[: rows * cols].reshape(rows, cols).astype(np.float64)
    labels = body[rows * cols :].astype(np.float64) if flags & 1 else None
    return flags >> 8, values, labels


def save_prediction_matrix(path: str | Path, pm: PredictionMatrix) -> None:
    _write_matrix(Path(path), _KIND_PREDICTION, pm.values, pm.point_labels)


def load_prediction_matrix(path: str | Path) -> PredictionMatrix:
    kind, values, labels = _read_matrix(Path(path))
    if kind != _KIND_PREDICTION or labels is None:
        raise ValueError(f"{path}: not a prediction-matrix file")
    return PredictionMatrix(values, labels)


def save_vi_matrix(path: str | Path, vi: ViMatrix) -> None:
    _write_matrix(Path(path), _KIND_VI[vi.rule], vi.values, None)


def load_vi_matrix(path: str | Path) -> ViMatrix:
    kind, values, _ = _read_matrix(Path(path))
    if kind not in _KIND_VI_REV:
        raise ValueError(f"{path}: not a variable-importance matrix file")
    return ViMatrix(values, _KIND_VI_REV[kind])


def matrix_to_csv(path: str | Path, values: np.ndarray) -> None:
    """Rows = trees; plain float cells, full round-trip precision."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in np.atleast_2d(values):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
