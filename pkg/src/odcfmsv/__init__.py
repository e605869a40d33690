"""Observed dynamic-correlation factor multivariate stochastic volatility.

Bayesian estimation of a factor model for asset returns in which the
observed factors carry stochastic volatilities and a stochastically
evolving correlation matrix driven by an inverse Wishart process.
Includes a competing Wishart factor-covariance variant and an SV-errors
variant, one-step-ahead prediction with log predictive scores and
cumulative Bayes factors, the simulation comparison harness, and a CLI.

Set ODCFMSV_DISABLE_NUMBA=1 to run the pure-numpy kernel fallbacks.
"""

from .errors import (
    ConfigError,
    DataError,
    NearSingularError,
    NotSpdError,
    NumericalError,
    OdcfmsvError,
    SamplerError,
)
from .evaluate import (
    DeltaMklResult,
    ExperimentScale,
    PerformanceReport,
    delta_mkl_experiment,
    fn_mean,
    frobenius_error,
    kl_normal,
    mae_series,
    mkl,
    realized_cov,
    rolling_corr,
)
from .gibbs import ChainDraws, GibbsChain, McmcConfig, run_chain, summarize
from .matrixdist import sample_wishart, spd_power, standardize_corr
from .model import (
    CorrDynParams,
    FactorDataset,
    MeasurementParams,
    ModelState,
    ModelVariant,
    PriorConfig,
    SvParams,
    simulate_odcfmsv,
    simulate_pg,
)
from .predict import (
    Evidence,
    ForecastReport,
    PredictiveDraw,
    cum_log_bayes_factor,
    draw_predictive,
    evidence_label,
    lps,
    lps_ew,
    one_step_forecast,
    predictive_return_cov,
    rolling_backtest,
    var_estimate,
)
from .presets import PRESETS, simulate_preset

__version__ = "0.1.0"

__all__ = [
    "ChainDraws",
    "ConfigError",
    "CorrDynParams",
    "DataError",
    "DeltaMklResult",
    "Evidence",
    "ExperimentScale",
    "FactorDataset",
    "ForecastReport",
    "GibbsChain",
    "McmcConfig",
    "MeasurementParams",
    "ModelState",
    "ModelVariant",
    "NearSingularError",
    "NotSpdError",
    "NumericalError",
    "OdcfmsvError",
    "PRESETS",
    "PerformanceReport",
    "PredictiveDraw",
    "PriorConfig",
    "SamplerError",
    "SvParams",
    "cum_log_bayes_factor",
    "delta_mkl_experiment",
    "draw_predictive",
    "evidence_label",
    "fn_mean",
    "frobenius_error",
    "kl_normal",
    "lps",
    "lps_ew",
    "mae_series",
    "mkl",
    "one_step_forecast",
    "predictive_return_cov",
    "realized_cov",
    "rolling_backtest",
    "rolling_corr",
    "run_chain",
    "sample_wishart",
    "simulate_odcfmsv",
    "simulate_pg",
    "simulate_preset",
    "spd_power",
    "standardize_corr",
    "summarize",
    "var_estimate",
]
