"""Dataset ingestion and the train / hold-out / test partitioning.

CSV is the only ingestion format: comma-separated, UTF-8, optional single
header row, one observation per row, every cell a finite decimal real
(scientific notation accepted). Missing or non-numeric cells are errors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import fisher_yates


@dataclass(frozen=True)
class Dataset:
    """n x p feature matrix plus length-n label vector, all finite reals."""

    features: np.ndarray
    labels: np.ndarray
    column_names: list[str] | None = None

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labs = np.ascontiguousarray(self.labels, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError(f"features must be a nonempty 2-D matrix, got shape {feats.shape}")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise ValueError(
                f"labels length {labs.shape} does not match {feats.shape[0]} feature rows"
            )
        if not np.isfinite(feats).all() or not np.isfinite(labs).all():
            raise ValueError("dataset contains non-finite values")
        if self.column_names is not None and len(self.column_names) != feats.shape[1]:
            raise ValueError("column_names length does not match feature count")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.column_names)


@dataclass(frozen=True)
class Partition:
    """Disjoint, exhaustive split of row indices 0..N-1 into three sets."""

    train_indices: np.ndarray
    holdout_indices: np.ndarray
    test_indices: np.ndarray
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": int(self.seed),
                "train": [int(i) for i in self.train_indices],
                "holdout": [int(i) for i in self.holdout_indices],
                "test": [int(i) for i in self.test_indices],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        obj = json.loads(text)
        return cls(
            np.asarray(obj["train"], np.int64),
            np.asarray(obj["holdout"], np.int64),
            np.asarray(obj["test"], np.int64),
            int(obj["seed"]),
        )


def _parse_cell(cell: str, row: int, col: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ValueError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(v):
        raise ValueError(f"non-finite cell {cell!r} at row {row}, column {col}")
    return v


def load_csv(path: str | Path, label_column: str | int, header: bool = True) -> Dataset:
    """Read a CSV file into a Dataset, removing the label column from features.

    label_column may be a header name (requires header=True) or a 0-based
    column index. Row order is preserved.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: empty dataset")

    names: list[str] | None = None
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ValueError(f"{path}: no data rows after header")
    ncols = len(rows[0])

    if isinstance(label_column, str) and not (header and label_column in (names or [])):
        # Allow a numeric string as an index when there is no matching name.
        try:
            label_column = int(label_column)
        except ValueError:
            raise ValueError(f"{path}: label column {label_column!r} not found") from None
    if isinstance(label_column, str):
        label_idx = (names or []).index(label_column)
    else:
        label_idx = int(label_column)
        if not 0 <= label_idx < ncols:
            raise ValueError(f"{path}: label column index {label_idx} out of range (p+1={ncols})")

    data = np.empty((len(rows), ncols), np.float64)
    for i, row in enumerate(rows):
        if len(row) != ncols:
            raise ValueError(f"{path}: row {i} has {len(row)} cells, expected {ncols}")
        for j, cell in enumerate(row):
            data[i, j] = _parse_cell(cell.strip(), i, j)

    labels = data[:, label_idx].copy()
    features = np.delete(data, label_idx, axis=1)
    if features.shape[1] == 0:
        raise ValueError(f"{path}: no feature columns besides the label")
    feat_names = None
    if names is not None:
        feat_names = [n for j, n in enumerate(names) if j != label_idx]
    return Dataset(features, labels, feat_names)


def save_csv(path: str | Path, data: Dataset) -> None:
    """Write a Dataset back out with the label in the last column."""
    names = data.column_names or [f"x{j + 1}" for j in range(data.p)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["y"])
        for i in range(data.n):
            writer.writerow(
                [repr(float(v)) for v in data.features[i]] + [repr(float(data.labels[i]))]
            )


def split_dataset(
    full: Dataset, train_frac: float, holdout_ratio: float, seed: int
) -> Partition:
    """Random partition into train / hold-out / test index sets.

    A seeded Fisher-Yates permutation orders the rows; the first
    floor(N * train_frac) become the training set, and the hold-out set is
    carved from the remainder so |H| / (|H| + |D|) matches holdout_ratio,
    i.e. |H| = round(ratio * |D| / (1 - ratio)), clamped to the pool.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0,1), got {train_frac}")
    if not 0.0 <= holdout_ratio < 1.0:
        raise ValueError(f"holdout_ratio must be in [0,1), got {holdout_ratio}")
    n = full.n
    perm = fisher_yates(n, seed)
    n_train = int(n * train_frac)
    if n_train < 1:
        raise ValueError(f"empty training set: N={n}, train_frac={train_frac}")
    pool = n - n_train
    n_hold = int(round(holdout_ratio * n_train / (1.0 - holdout_ratio)))
    n_hold = min(n_hold, pool)
    return Partition(
        train_indices=np.sort(perm[:n_train]),
        holdout_indices=np.sort(perm[n_train : n_train + n_hold]),
        test_indices=np.sort(perm[n_train + n_hold :]),
        seed=int(seed),
    )
