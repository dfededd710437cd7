"""Differentially private Gaussian process regression.

Two release mechanisms for GP posterior means (a function-space prior
perturbation and a correlated-noise cloaking release), DP hyperparameter
selection through the exponential mechanism, Laplace-noised binning
baselines, and a cross-validation benchmark harness.
"""
from .binning import (
    BinGrid,
    IntegralGPModel,
    bin_data,
    dp_bin_means,
    fit_integral_gp,
    integral_kernel_eval,
    integral_point_eval,
    make_edges,
    predict_binned,
)
from .cloaking import (
    CloakingConvergenceError,
    CloakingOptions,
    CloakingSolution,
    calc_M,
    calc_delta,
    find_lambdas,
    grad_lambda,
    release_cloaking,
    solve_cloaking,
)
from .data import Dataset, IngestReport, clip_and_center, clip_half_width, ingest_csv
from .experiments import (
    MECHANISMS,
    BinningSettings,
    ExperimentConfig,
    release_dataset,
    rmse,
    run_experiment,
)
from .gp import GPModel, fit
from .hyperparams import (
    CandidateScore,
    HyperGrid,
    SelectionResult,
    exponential_mechanism,
    monte_carlo_folds,
    select_hyperparameters,
    selection_probabilities,
    sse_utility,
)
from .kernels import KernelSpec, chol_with_jitter
from .privacy import DPParams, ReleaseResult, c_delta
from .rkhs import (
    NotDiagonallyDominantError,
    RKHSRelease,
    bound_b,
    release_rkhs,
    rkhs_release_constants,
    sample_prior,
    varah_bound,
)

__version__ = "0.1.0"

__all__ = [
    "BinGrid",
    "BinningSettings",
    "CandidateScore",
    "CloakingConvergenceError",
    "CloakingOptions",
    "CloakingSolution",
    "DPParams",
    "Dataset",
    "ExperimentConfig",
    "GPModel",
    "HyperGrid",
    "IngestReport",
    "IntegralGPModel",
    "KernelSpec",
    "MECHANISMS",
    "NotDiagonallyDominantError",
    "RKHSRelease",
    "ReleaseResult",
    "SelectionResult",
    "bin_data",
    "bound_b",
    "c_delta",
    "calc_M",
    "calc_delta",
    "chol_with_jitter",
    "clip_and_center",
    "clip_half_width",
    "dp_bin_means",
    "exponential_mechanism",
    "find_lambdas",
    "fit",
    "fit_integral_gp",
    "grad_lambda",
    "ingest_csv",
    "integral_kernel_eval",
    "integral_point_eval",
    "make_edges",
    "monte_carlo_folds",
    "predict_binned",
    "release_cloaking",
    "release_dataset",
    "release_rkhs",
    "rkhs_release_constants",
    "rmse",
    "run_experiment",
    "sample_prior",
    "select_hyperparameters",
    "selection_probabilities",
    "solve_cloaking",
    "sse_utility",
    "varah_bound",
]
