"""Fixed-rank spatial and spatio-temporal prediction with basis-function models."""
from .basis import (
    BasisSet, BisquareFn, MultiResSpec, Resolution, TensorStFn, bisquare_eval,
    build_multires, design_matrix, load_basis, save_basis, tensor_st_basis,
)
from .bivariate import BivariateDataset, BivariateModel, assemble_joint_k, cokrige, cross_cov
from .covariance import (
    Ar1PerResolution, ExpCentroid, MaternParams, NoiseParams, ScaledIdentity, Unstructured,
    cov_y, cov_y_matrix, k_matrix, matern, psd_check,
)
from .data import (
    CsvSchema, DataError, SpatialDataset, SplitSpec, StDataset, distance, load_csv,
    load_st_csv, save_csv, save_st_csv, split, split_indices,
)
from .diagnostics import (
    Diagnostics, coverage_and_interval_score, crps_gaussian, crps_sample, diagnose, format_table, rmspe,
)
from .dynamic import (
    DynamicStModel, StateTrajectory, descriptive_st_predict, kalman_filter, kalman_smoother,
    predict_st, simulate_dynamic, transient_growth_diag,
)
from .em import EmConfig, EmMonotonicityError, FitResult, e_step, fit_em, initial_params, m_step
from .engine import (
    PredictiveResult, SingularModelError, SreParams, fit_matern_ml, fitted_solve,
    kriging_baseline, log_likelihood, predict, smw_apply,
)
from .simulate import simulate_sre
from .transgauss import BoxCox, McConfig, TransformDomainError, bc_forward, bc_inverse, predict_trans

__all__ = [
    "BasisSet", "BisquareFn", "MultiResSpec", "Resolution", "TensorStFn", "bisquare_eval",
    "build_multires", "design_matrix", "load_basis", "save_basis", "tensor_st_basis",
    "BivariateDataset", "BivariateModel", "assemble_joint_k", "cokrige", "cross_cov",
    "Ar1PerResolution", "ExpCentroid", "MaternParams", "NoiseParams", "ScaledIdentity",
    "Unstructured", "cov_y", "cov_y_matrix", "k_matrix", "matern", "psd_check", "CsvSchema",
    "DataError", "SpatialDataset", "SplitSpec", "StDataset", "distance", "load_csv",
    "load_st_csv", "save_csv", "save_st_csv", "split", "split_indices", "Diagnostics",
    "coverage_and_interval_score", "crps_gaussian", "crps_sample", "diagnose", "format_table",
    "rmspe", "DynamicStModel", "StateTrajectory", "descriptive_st_predict", "kalman_filter",
    "kalman_smoother", "predict_st", "simulate_dynamic", "transient_growth_diag", "EmConfig",
    "EmMonotonicityError", "FitResult", "e_step", "fit_em", "initial_params", "m_step",
    "PredictiveResult", "SingularModelError", "SreParams", "fit_matern_ml", "fitted_solve",
    "kriging_baseline", "log_likelihood", "predict", "smw_apply", "simulate_sre", "BoxCox",
    "McConfig", "TransformDomainError", "bc_forward", "bc_inverse", "predict_trans",
]

__version__ = "0.1.0"
