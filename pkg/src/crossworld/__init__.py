from .cate import (
    CateEstimate,
    bootstrap_cate_ci,
    estimate_cate,
    leaf_bootstrap_cate_ci,
    predict_cate,
)
from .conformal import (
    BandPrediction,
    CalibratedBand,
    SplitPlan,
    fit_cqr_band,
    naive_ite_interval,
    naive_ite_intervals,
    sqrt_level,
)
from .config import ExperimentConfig, MethodSpec, RhoRule, load_config
from .core import Interval, IntervalArray, Rho, d_rho, interval_contains
from .cw import (
    CWConfig,
    cmc_interval,
    cmc_intervals,
    cw_ci_interval,
    cw_ci_intervals,
    cw_interval,
    cw_intervals,
    effective_c,
    misspecify_rho,
)
from .datagen import (
    CsvSchema,
    Dataset,
    NoiseSpec,
    estimate_conditional_correlation,
    gen_copula_noise,
    gen_hidden_covariate,
    gen_semi_synthetic,
    gen_synthetic,
    load_csv,
    rho_from_variance_decomposition,
    split_dataset,
    write_csv,
)
from .evaluation import (
    ExperimentResult,
    MethodResult,
    avg_width,
    coverage,
    coverage_width_loss,
    summarize,
)
from .exceptions import (
    ConfigurationError,
    CrossworldError,
    DiagnosticError,
    DomainError,
    InputError,
)
from .experiment import run_experiment, run_experiment_async
from .learners import (
    LearnerParams,
    QuantileForest,
    fit_mean_model,
    fit_quantile_model,
    predict_mean,
    predict_quantile,
)
from .oracle import GaussianPair, norm_ppf, oracle_arm_bounds, oracle_ite_interval
from .pipeline import IntervalPipeline

__version__ = "2026.10.17"

__all__ = [
    "BandPrediction",
    "CalibratedBand",
    "CateEstimate",
    "ConfigurationError",
    "CrossworldError",
    "CsvSchema",
    "CWConfig",
    "Dataset",
    "DiagnosticError",
    "DomainError",
    "ExperimentConfig",
    "ExperimentResult",
    "GaussianPair",
    "InputError",
    "Interval",
    "IntervalArray",
    "IntervalPipeline",
    "LearnerParams",
    "MethodResult",
    "MethodSpec",
    "NoiseSpec",
    "QuantileForest",
    "Rho",
    "RhoRule",
    "SplitPlan",
    "avg_width",
    "bootstrap_cate_ci",
    "cmc_interval",
    "cmc_intervals",
    "coverage",
    "coverage_width_loss",
    "cw_ci_interval",
    "cw_ci_intervals",
    "cw_interval",
    "cw_intervals",
    "d_rho",
    "effective_c",
    "estimate_cate",
    "estimate_conditional_correlation",
    "fit_cqr_band",
    "fit_mean_model",
    "fit_quantile_model",
    "gen_copula_noise",
    "gen_hidden_covariate",
    "gen_semi_synthetic",
    "gen_synthetic",
    "interval_contains",
    "leaf_bootstrap_cate_ci",
    "load_config",
    "load_csv",
    "misspecify_rho",
    "naive_ite_interval",
    "naive_ite_intervals",
    "norm_ppf",
    "oracle_arm_bounds",
    "oracle_ite_interval",
    "predict_cate",
    "predict_mean",
    "predict_quantile",
    "rho_from_variance_decomposition",
    "run_experiment",
    "run_experiment_async",
    "split_dataset",
    "sqrt_level",
    "summarize",
    "write_csv",
]
