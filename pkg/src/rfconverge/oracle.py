"""Monte Carlo ground truth for the convergence estimators.

Reproduces, at configurable scale, the protocol of repeatedly retraining the
ensemble on one fixed training set: the infinite-ensemble error is
approximated by the cross-run mean at the largest trained size, true quantile
curves of the convergence gap are read off the run paths, and the bootstrap
estimator's coverage is measured against those truths. Synthetic generators
(friedman1 / linear / constant) make the whole pipeline hermetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._rng import seed_sequence
from ._util import parallel_map
from .cart import TreeParams
from .convergence import (
    BootstrapConfig,
    bootstrap_mse_quantile,
    bootstrap_mse_quantile_oob,
    empirical_quantile,
    extrapolate,
)
from .data import Dataset
from .forest import (
    impurity_vi_matrix,
    oob_structure,
    permutation_importance,
    predict_matrix,
    train_ensemble,
)

_GENERATORS = ("friedman1", "linear", "constant")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic regression dataset (features uniform on [0,1])."""

    generator: str
    n: int
    p: int
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.generator not in _GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.n < 1 or self.p < 1:
            raise ValueError(f"need n >= 1 and p >= 1, got n={self.n}, p={self.p}")
        if self.generator == "friedman1" and self.p < 5:
            raise ValueError(f"friedman1 needs p >= 5, got p={self.p}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw the dataset for a SyntheticSpec, deterministically in its seed."""
    rng = np.random.Generator(np.random.PCG64(seed_sequence(spec.seed)))
    X = rng.uniform(0.0, 1.0, size=(spec.n, spec.p))
    noise = rng.normal(0.0, spec.noise_sd, size=spec.n)
    if spec.generator == "friedman1":
        y = (
            10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
            + 20.0 * (X[:, 2] - 0.5) ** 2
            + 10.0 * X[:, 3]
            + 5.0 * X[:, 4]
        )
    elif spec.generator == "linear":
        y = X.sum(axis=1)
    else:
        y = np.zeros(spec.n)
    return Dataset(X, y + noise)


@dataclass(frozen=True)
class QuantileCurve:
    """True (1-alpha)-quantile of the convergence gap on a size grid."""

    ts: np.ndarray
    values: np.ndarray
    alpha: float
    kind: str  # mse_gap | vi_gap

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": float(self.alpha),
            "ts": [int(t) for t in self.ts],
            "values": [float(v) for v in self.values],
        }


@dataclass(frozen=True)
class OracleReport:
    """Cross-run summary: limit estimates, true curve, optional raw paths."""

    runs: int
    t_max: int
    alpha: float
    curve: QuantileCurve
    mse_inf_hat: float | None = None
    vi_inf_hat: np.ndarray | None = None
    per_run_paths: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "runs": int(self.runs),
            "t_max": int(self.t_max),
            "alpha": float(self.alpha),
            "mse_inf_hat": None if self.mse_inf_hat is None else float(self.mse_inf_hat),
            "vi_inf_hat": None
            if self.vi_inf_hat is None
            else [float(v) for v in self.vi_inf_hat],
            "curve": self.curve.to_dict(),
        }
        if self.per_run_paths is not None:
            out["per_run_paths"] = [[float(v) for v in row] for row in self.per_run_paths]
        return out


def _check_grid(t_grid, t_max: int) -> np.ndarray:
    grid = np.asarray(t_grid, np.int64)
    if grid.size == 0 or (grid < 1).any():
        raise ValueError("t_grid must hold positive ensemble sizes")
    if (np.diff(grid) <= 0).any():
        raise ValueError("t_grid must be strictly increasing")
    if grid[-1] > t_max:
        raise ValueError(f"t_grid exceeds t_max={t_max}")
    return grid


def default_grid(t_max: int, start: int = 25) -> list[int]:
    """Geometric grid {start, 2*start, ...} up to and including t_max."""
    grid = []
    t = start
    while t < t_max:
        grid.append(t)
        t *= 2
    grid.append(t_max)
    return grid


def true_quantile_curve(
    train: Dataset,
    eval_points: np.ndarray,
    eval_labels: np.ndarray,
    params: TreeParams,
    runs: int,
    t_grid,
    t_max: int,
    alpha: float,
    seed: int,
    threads: int = 1,
    store_paths: bool = False,
) -> OracleReport:
    """True quantile curve of the squared-error convergence gap.

    Each run retrains a size-t_max ensemble with its own derived seed and
    records the evaluation-set MSE of the prefix-averaged ensemble at every
    grid size (one prediction matrix per run, one streaming pass). The limit
    is the cross-run mean at t_max; the curve is the empirical
    (1-alpha)-quantile of the centered paths.
    """
    if runs < 2:
        raise ValueError(f"need at least 2 runs, got {runs}")
    eval_points = np.ascontiguousarray(eval_points, np.float64)
    eval_labels = np.ascontiguousarray(eval_labels, np.float64)
    if eval_points.shape[0] < 1:
        raise ValueError("empty evaluation set")
    grid = _check_grid(t_grid, t_max)
    inner = grid if grid[-1] == t_max else np.append(grid, t_max)

    def one_run(r: int) -> np.ndarray:
        master = int(seed_sequence(seed, r).generate_state(1, np.uint64)[0])
        ens = train_ensemble(train, t_max, params, master)
        pm = predict_matrix(ens, eval_points, eval_labels)
        return kernels.prefix_mse_path(pm.residuals(), inner)

    paths = np.stack(parallel_map(one_run, range(runs), threads))
    mse_inf_hat = float(paths[:, -1].mean())
    gap_paths = paths[:, : grid.size] - mse_inf_hat
    values = np.array(
        [empirical_quantile(gap_paths[:, gi], 1.0 - alpha) for gi in range(grid.size)]
    )
    return OracleReport(
        runs=runs,
        t_max=t_max,
        alpha=alpha,
        curve=QuantileCurve(grid, values, alpha, "mse_gap"),
        mse_inf_hat=mse_inf_hat,
        per_run_paths=gap_paths if store_paths else None,
    )


def true_vi_quantile_curve(
    train: Dataset,
    params: TreeParams,
    vi_rule: str,
    runs: int,
    t_grid,
    t_max: int,
    alpha: float,
    seed: int,
    threads: int = 1,
    store_paths: bool = False,
) -> OracleReport:
    """True quantile curve of the uniform variable-importance gap.

    Per run, prefix means of the VI rows are taken at each grid size; the
    limit vector is the cross-run mean of the full-ensemble averages, and the
    path statistic is the max coordinate deviation from that limit.
    """
    if runs < 2:
        raise ValueError(f"need at least 2 runs, got {runs}")
    grid = _check_grid(t_grid, t_max)

    def one_run(r: int) -> tuple[np.ndarray, np.ndarray]:
        run_ss = seed_sequence(seed, r)
        ens_ss, perm_ss = run_ss.spawn(2)
        master = int(ens_ss.generate_state(1, np.uint64)[0])
        ens = train_ensemble(train, t_max, params, master)
        if vi_rule == "impurity":
            vi = impurity_vi_matrix(ens, train)
        elif vi_rule == "permutation":
            vi = permutation_importance(ens, train, int(perm_ss.generate_state(1, np.uint64)[0]))
        else:
            raise ValueError(f"unknown VI rule {vi_rule!r}")
        cum = np.cumsum(vi.values, axis=0)
        prefix_means = cum[grid - 1] / grid[:, None].astype(np.float64)
        return prefix_means, cum[-1] / float(t_max)

    results = parallel_map(one_run, range(runs), threads)
    finals = np.stack([fin for _, fin in results])
    vi_inf_hat = finals.mean(axis=0)
    eps_paths = np.stack(
        [np.max(np.abs(pm - vi_inf_hat), axis=1) for pm, _ in results]
    )
    values = np.array(
        [empirical_quantile(eps_paths[:, gi], 1.0 - alpha) for gi in range(grid.size)]
    )
    return OracleReport(
        runs=runs,
        t_max=t_max,
        alpha=alpha,
        curve=QuantileCurve(grid, values, alpha, "vi_gap"),
        vi_inf_hat=vi_inf_hat,
        per_run_paths=eps_paths if store_paths else None,
    )


@dataclass(frozen=True)
class CoverageResult:
    """Empirical coverage of the bootstrap quantile against the true gap."""

    coverage: float
    runs: int
    t_check: int
    mode: str
    alpha: float
    gaps: np.ndarray
    q_hats: np.ndarray

    def to_dict(self) -> dict:
        return {
            "coverage": float(self.coverage),
            "runs": int(self.runs),
            "t_check": int(self.t_check),
            "mode": self.mode,
            "alpha": float(self.alpha),
            "gaps": [float(g) for g in self.gaps],
            "q_hats": [float(q) for q in self.q_hats],
        }


def coverage_check(
    train: Dataset,
    eval_points: np.ndarray,
    eval_labels: np.ndarray,
    params: TreeParams,
    mode: str,
    boot: BootstrapConfig,
    runs: int,
    t_check: int,
    seed: int,
    mse_inf_hat: float | None,
    holdout_points: np.ndarray | None = None,
    holdout_labels: np.ndarray | None = None,
    threads: int = 1,
) -> CoverageResult:
    """Fraction of fresh runs whose true gap falls below the bootstrap bound.

    Each run trains a size-t_check ensemble, estimates the quantile with the
    chosen estimator variant, and compares it to that run's true gap
    (evaluation-set MSE minus the oracle's limit estimate).
    """
    if mse_inf_hat is None:
        raise ValueError("coverage_check requires mse_inf_hat from a prior oracle report")
    if runs < 20:
        raise ValueError(f"need at least 20 runs for a meaningful coverage, got {runs}")
    if mode not in ("holdout", "oob"):
        raise ValueError(f"coverage mode must be holdout or oob, got {mode!r}")
    if mode == "holdout" and (holdout_points is None or holdout_labels is None):
        raise ValueError("holdout mode needs holdout points and labels")
    eval_points = np.ascontiguousarray(eval_points, np.float64)
    eval_labels = np.ascontiguousarray(eval_labels, np.float64)
    t_grid = np.asarray([t_check], np.int64)

    def one_run(r: int) -> tuple[float, float]:
        ens_ss, boot_ss = seed_sequence(seed, r).spawn(2)
        master = int(ens_ss.generate_state(1, np.uint64)[0])
        boot_seed = int(boot_ss.generate_state(1, np.uint64)[0])
        ens = train_ensemble(train, t_check, params, master)
        pm_eval = predict_matrix(ens, eval_points, eval_labels)
        mse_t = float(kernels.prefix_mse_path(pm_eval.residuals(), t_grid)[0])
        cfg = BootstrapConfig(B=boot.B, alpha=boot.alpha, seed=boot_seed)
        if mode == "oob":
            pm_train = predict_matrix(ens, train.features, train.labels)
            est = bootstrap_mse_quantile_oob(pm_train, oob_structure(ens).mask, cfg, train.n)
        else:
            pm_hold = predict_matrix(ens, holdout_points, holdout_labels)
            est = bootstrap_mse_quantile(pm_hold, cfg)
        return mse_t - mse_inf_hat, est.q_hat

    results = parallel_map(one_run, range(runs), threads)
    gaps = np.array([g for g, _ in results])
    q_hats = np.array([q for _, q in results])
    return CoverageResult(
        coverage=float(np.mean(gaps <= q_hats)),
        runs=runs,
        t_check=t_check,
        mode=mode,
        alpha=boot.alpha,
        gaps=gaps,
        q_hats=q_hats,
    )


def oob_extrapolation_study(
    train: Dataset,
    params: TreeParams,
    t0: int,
    t_target: int,
    boot: BootstrapConfig,
    runs: int,
    seed: int,
    threads: int = 1,
) -> dict[str, np.ndarray]:
    """Per-run OOB quantile estimates at t0 extrapolated to t_target.

    Returns both the bias-corrected prediction (effective initial size
    (1-1/n)^n * t0) and the uncorrected one (initial size taken at face
    value) so the two rules can be compared against the oracle truth.
    """
    if runs < 1:
        raise ValueError("need at least 1 run")
    if t_target < t0:
        raise ValueError(f"t_target={t_target} below t0={t0}")

    def one_run(r: int) -> tuple[float, float]:
        ens_ss, boot_ss = seed_sequence(seed, r).spawn(2)
        master = int(ens_ss.generate_state(1, np.uint64)[0])
        boot_seed = int(boot_ss.generate_state(1, np.uint64)[0])
        ens = train_ensemble(train, t0, params, master)
        pm_train = predict_matrix(ens, train.features, train.labels)
        cfg = BootstrapConfig(B=boot.B, alpha=boot.alpha, seed=boot_seed)
        est = bootstrap_mse_quantile_oob(pm_train, oob_structure(ens).mask, cfg, train.n)
        corrected = extrapolate(est, t_target)
        uncorrected = math.sqrt(t0) * est.q_hat / math.sqrt(t_target)
        return corrected, uncorrected

    results = parallel_map(one_run, range(runs), threads)
    return {
        "corrected": np.array([c for c, _ in results]),
        "uncorrected": np.array([u for _, u in results]),
    }
