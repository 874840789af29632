"""Bootstrap diagnostics for the algorithmic convergence of bagged ensembles.

Train a random-forest-style regression ensemble, then bound how far its
mean-squared error and variable-importance ranking sit from their
infinite-ensemble limits by resampling the trained trees; extrapolate the
bound to larger ensembles and validate it against a Monte Carlo oracle.
"""

from .cart import RegressionTree, TreeParams, fit_tree, impurity_importance, predict_tree
from .convergence import (
    BootstrapConfig,
    ConvergenceEstimate,
    bootstrap_mse_quantile,
    bootstrap_mse_quantile_oob,
    bootstrap_vi_quantile,
    empirical_quantile,
    extrapolate,
    extrapolation_curve,
    oob_effective_size,
    recommend_size,
)
from .data import Dataset, Partition, load_csv, save_csv, split_dataset
from .forest import (
    Ensemble,
    OobStructure,
    PredictionMatrix,
    ViMatrix,
    impurity_vi_matrix,
    load_prediction_matrix,
    load_vi_matrix,
    oob_structure,
    permutation_importance,
    predict_matrix,
    save_prediction_matrix,
    save_vi_matrix,
    train_ensemble,
)
from .oracle import (
    CoverageResult,
    OracleReport,
    QuantileCurve,
    SyntheticSpec,
    coverage_check,
    generate_synthetic,
    oob_extrapolation_study,
    true_quantile_curve,
    true_vi_quantile_curve,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "ConvergenceEstimate",
    "CoverageResult",
    "Dataset",
    "Ensemble",
    "OobStructure",
    "OracleReport",
    "Partition",
    "PredictionMatrix",
    "QuantileCurve",
    "RegressionTree",
    "SyntheticSpec",
    "TreeParams",
    "ViMatrix",
    "bootstrap_mse_quantile",
    "bootstrap_mse_quantile_oob",
    "bootstrap_vi_quantile",
    "coverage_check",
    "empirical_quantile",
    "extrapolate",
    "extrapolation_curve",
    "fit_tree",
    "generate_synthetic",
    "impurity_importance",
    "impurity_vi_matrix",
    "load_csv",
    "load_prediction_matrix",
    "load_vi_matrix",
    "oob_effective_size",
    "oob_extrapolation_study",
    "oob_structure",
    "permutation_importance",
    "predict_matrix",
    "predict_tree",
    "recommend_size",
    "save_csv",
    "save_prediction_matrix",
    "save_vi_matrix",
    "split_dataset",
    "train_ensemble",
    "true_quantile_curve",
    "true_vi_quantile_curve",
]
