"""Bootstrap estimation of ensemble-convergence quantiles, with extrapolation.

Trained trees are treated as exchangeable observations: resampling them with
replacement and re-forming the ensemble average yields bootstrap replicates
of the convergence gap, whose empirical (1-alpha)-quantile bounds how far the
current ensemble sits from its infinite-ensemble limit. Three modes share the
machinery:

* ``holdout`` -- squared-error functional estimated on held-out points;
* ``oob``     -- squared-error functional from out-of-bag predictions on the
  training points (no data sacrificed; effective ensemble size shrinks to
  (1 - 1/n)^n * t, which the extrapolation rule corrects for);
* ``vi``      -- max-coordinate deviation of the averaged variable-importance
  vector.

Resamples are handled as count vectors over tree indices, never materialized
tree lists, so one replicate costs O(t * m). All replicate arithmetic runs on
residuals (label minus prediction), which makes the estimates structurally
invariant to shifting labels and predictions by a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._rng import generator
from .forest import PredictionMatrix, ViMatrix

_MODES = ("holdout", "oob", "vi")
_STREAM_TAG = {"holdout": 0, "oob": 1, "vi": 2}


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, quantile level and seed for one bootstrap run."""

    B: int = 50
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")


@dataclass(frozen=True)
class ConvergenceEstimate:
    """Quantile estimate at ensemble size t0, plus its raw replicates."""

    mode: str
    t0: int
    alpha: float
    q_hat: float
    effective_t0: float
    replicates: np.ndarray

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "t0": int(self.t0),
            "effective_t0": float(self.effective_t0),
            "alpha": float(self.alpha),
            "B": int(self.replicates.shape[0]),
            "q_hat": float(self.q_hat),
            "replicates": [float(z) for z in self.replicates],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ConvergenceEstimate":
        return cls(
            mode=obj["mode"],
            t0=int(obj["t0"]),
            alpha=float(obj["alpha"]),
            q_hat=float(obj["q_hat"]),
            effective_t0=float(obj["effective_t0"]),
            replicates=np.asarray(obj["replicates"], np.float64),
        )


def empirical_quantile(values: np.ndarray, level: float) -> float:
    """The ceil(B * level)-th order statistic (1-indexed, ascending).

    Pins the inf-form empirical quantile to one convention: the index comes
    from the float64 product B * level, so e.g. level 0.9 over 10 values
    selects the 9th.
    """
    vals = np.asarray(values, np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("empirical_quantile needs a nonempty 1-D vector")
    if not 0.0 < level < 1.0:
        raise ValueError(f"quantile level must be in (0,1), got {level}")
    k = int(math.ceil(vals.size * level))
    k = min(max(k, 1), vals.size)
    return float(np.sort(vals, kind="stable")[k - 1])


def resample_counts(t: int, B: int, seed: int, stream_tag: int) -> np.ndarray:
    """B multinomial count vectors over t indices (t draws with replacement).

    Replicate b is keyed by (seed, stream_tag, b); the tag keeps the three
    estimator modes on independent streams even under a shared seed.
    """
    counts = np.empty((B, t), np.int64)
    for b in range(B):
        draws = generator(seed, stream_tag, b).integers(0, t, size=t)
        counts[b] = np.bincount(draws, minlength=t)
    return counts


def oob_effective_size(n: int, t: int | float) -> float:
    """Expected OOB multiplicity (1 - 1/n)^n * t, the effective ensemble size."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return (1.0 - 1.0 / n) ** n * t


def bootstrap_mse_quantile(
    pred: PredictionMatrix, cfg: BootstrapConfig
) -> ConvergenceEstimate:
    """Hold-out convergence-gap quantile from a prediction matrix."""
    if pred.t < 2:
        raise ValueError(f"need at least 2 trees to resample, got t={pred.t}")
    if pred.m < 1:
        raise ValueError("empty evaluation set")
    counts = resample_counts(pred.t, cfg.B, cfg.seed, _STREAM_TAG["holdout"])
    z = kernels.mse_replicates(pred.residuals(), counts)
    return ConvergenceEstimate(
        mode="holdout",
        t0=pred.t,
        alpha=cfg.alpha,
        q_hat=empirical_quantile(z, 1.0 - cfg.alpha),
        effective_t0=float(pred.t),
        replicates=z,
    )


def bootstrap_mse_quantile_oob(
    pred_on_train: PredictionMatrix,
    oob_mask: np.ndarray,
    cfg: BootstrapConfig,
    n: int,
) -> ConvergenceEstimate:
    """OOB convergence-gap quantile from predictions on the training points.

    Points whose OOB tree set (or resampled OOB multiplicity) is empty fall
    back to a zero residual, mirroring the prediction-equals-label rule.
    """
    mask = np.ascontiguousarray(oob_mask, np.bool_)
    if mask.shape != pred_on_train.values.shape:
        raise ValueError(
            f"oob mask shape {mask.shape} != prediction shape {pred_on_train.values.shape}"
        )
    if n != pred_on_train.m:
        raise ValueError(f"n={n} does not match the {pred_on_train.m} training points")
    if pred_on_train.t < 2:
        raise ValueError(f"need at least 2 trees to resample, got t={pred_on_train.t}")
    counts = resample_counts(pred_on_train.t, cfg.B, cfg.seed, _STREAM_TAG["oob"])
    z = kernels.oob_replicates(pred_on_train.residuals(), mask, counts)
    return ConvergenceEstimate(
        mode="oob",
        t0=pred_on_train.t,
        alpha=cfg.alpha,
        q_hat=empirical_quantile(z, 1.0 - cfg.alpha),
        effective_t0=oob_effective_size(n, pred_on_train.t),
        replicates=z,
    )


def bootstrap_vi_quantile(vi: ViMatrix, cfg: BootstrapConfig) -> ConvergenceEstimate:
    """Uniform variable-importance gap quantile; replicates are >= 0."""
    if vi.t < 2:
        raise ValueError(f"need at least 2 trees to resample, got t={vi.t}")
    counts = resample_counts(vi.t, cfg.B, cfg.seed, _STREAM_TAG["vi"])
    eps = kernels.vi_replicates(vi.values, counts)
    return ConvergenceEstimate(
        mode="vi",
        t0=vi.t,
        alpha=cfg.alpha,
        q_hat=empirical_quantile(eps, 1.0 - cfg.alpha),
        effective_t0=float(vi.t),
        replicates=eps,
    )


def extrapolate(est: ConvergenceEstimate, t: int | float) -> float:
    """Quantile predicted at ensemble size t under the 1/sqrt(t) law.

    Returns sqrt(effective_t0) * q_hat / sqrt(t). For the OOB mode the
    effective size (1-1/n)^n * t0 replaces t0, which is the bias correction;
    its domain starts at the effective size rather than t0.
    """
    if est.mode not in _MODES:
        raise ValueError(f"unknown estimate mode {est.mode!r}")
    t_min = est.effective_t0 if est.mode == "oob" else est.t0
    if t < t_min:
        raise ValueError(f"extrapolation domain starts at {t_min}, got t={t}")
    return math.sqrt(est.effective_t0) * est.q_hat / math.sqrt(t)


def extrapolation_curve(
    est: ConvergenceEstimate, t_final: int, t_start: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(t, extrapolated quantile) for every integer t in [t_start, t_final]."""
    start = est.t0 if t_start is None else t_start
    if t_final < start:
        raise ValueError(f"t_final={t_final} below curve start {start}")
    ts = np.arange(start, t_final + 1, dtype=np.int64)
    return ts, np.array([extrapolate(est, int(t)) for t in ts], np.float64)


def recommend_size(est: ConvergenceEstimate, epsilon: float) -> int:
    """Smallest integer t with extrapolate(est, t) <= epsilon.

    Evaluates ceil(effective_t0 * (q_hat / epsilon)^2), floored at t0: the
    recommendation never shrinks an ensemble that is already converged, so a
    nonpositive q_hat (or a tolerance already met) returns t0.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if est.q_hat <= 0.0:
        return int(est.t0)
    t_req = math.ceil(est.effective_t0 * (est.q_hat / epsilon) ** 2)
    return int(max(est.t0, t_req))
