"""Bayesian aggregation of regression predictors.

Convex aggregation puts Dirichlet-distributed weights on a dictionary of
predictors; linear aggregation rescales them with a gamma-distributed
magnitude and random signs. Both are sampled exactly by blocked MCMC, and a
train/aggregate/refit pipeline applies them to arbitrary base learners.
"""
from .bench import (
    BenchmarkConfig,
    ContractionReport,
    RmseReport,
    SweepReport,
    contraction_study,
    export_diagnostics,
    gamma_sensitivity,
    rmse,
    run_benchmark,
    score_external_predictions,
)
from .ca import CaHyper, initial_ca_state, log_accept_ratio_T, run_chain_ca, tune_beta
from .dirichlet import (
    ConcentrationEstimate,
    DirichletHyper,
    SignedCoefficients,
    SparseApproximationError,
    check_simplex,
    estimate_concentration,
    log_density_dirichlet,
    sample_double_dirichlet,
    sample_log_gamma,
    sample_symmetric_dirichlet,
    sparse_approximation,
    tail_mass,
)
from .la import (
    LaHyper,
    initial_la_state,
    log_accept_ratio_A,
    log_accept_ratio_z,
    run_chain_la,
)
from .mcmc import ChainOverflowError, PosteriorSamples, StepSizeTuner, summarize_posterior
from .pipeline import (
    AggregatedModel,
    BaseLearner,
    Dataset,
    FittedLearner,
    KnnLearner,
    PolySubsetLearner,
    RidgeLearner,
    aggregate,
    build_prediction_matrix,
    default_learners,
    read_dataset_csv,
    read_prediction_matrix_csv,
    split_data,
)
from .simulate import SimData, SimSpec, gen_nonlinear, gen_nonsparse, gen_sparse_linear, generate, true_coefficients

__version__ = "0.1.0"

__all__ = [
    "AggregatedModel",
    "BaseLearner",
    "BenchmarkConfig",
    "CaHyper",
    "ChainOverflowError",
    "ConcentrationEstimate",
    "ContractionReport",
    "Dataset",
    "DirichletHyper",
    "FittedLearner",
    "KnnLearner",
    "LaHyper",
    "PolySubsetLearner",
    "PosteriorSamples",
    "RidgeLearner",
    "RmseReport",
    "SignedCoefficients",
    "SimData",
    "SimSpec",
    "SparseApproximationError",
    "StepSizeTuner",
    "SweepReport",
    "aggregate",
    "build_prediction_matrix",
    "check_simplex",
    "contraction_study",
    "default_learners",
    "estimate_concentration",
    "export_diagnostics",
    "gamma_sensitivity",
    "gen_nonlinear",
    "gen_nonsparse",
    "gen_sparse_linear",
    "generate",
    "initial_ca_state",
    "initial_la_state",
    "log_accept_ratio_A",
    "log_accept_ratio_T",
    "log_accept_ratio_z",
    "log_density_dirichlet",
    "read_dataset_csv",
    "read_prediction_matrix_csv",
    "rmse",
    "run_benchmark",
    "run_chain_ca",
    "run_chain_la",
    "sample_double_dirichlet",
    "sample_log_gamma",
    "sample_symmetric_dirichlet",
    "score_external_predictions",
    "sparse_approximation",
    "split_data",
    "summarize_posterior",
    "tail_mass",
    "true_coefficients",
    "tune_beta",
]
