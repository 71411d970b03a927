"""Mean-reverting stochastic variance models.

Analytic steady states and correlation/leverage functions, SDE simulation,
realized-variance estimators, a calibration pipeline, and relaxation
experiments for the square-root (Heston-type) model.
"""

from .errors import (
    DivergentMomentError,
    DomainError,
    ExperimentError,
    FitError,
    InputError,
    ParameterError,
)
from .models import (
    GB2Params,
    MeanRevertingParams,
    SteadyStateDist,
    leverage_amplitude,
    leverage_function,
    reduced_covariance,
    stationary_variance,
    steady_state_of,
    variance_autocorr,
)
from .estimators import (
    CorrSeries,
    LeverageSeries,
    ReturnSeries,
    accumulate_returns,
    daily_var_corr,
    detrend,
    leverage_series,
    moment_ratio,
    multiday_var_corr,
    reduced_var_cov,
    theta_hat,
)
from .fitting import (
    FAMILIES,
    CalibrationReport,
    ExpFit,
    ExpOffsetFit,
    Gamma1Profile,
    MleReport,
    QuadRatioFit,
    calibrate,
    fit_exp,
    fit_exp_amplitude,
    fit_exp_offset,
    fit_ratio_quadratic,
    gamma1_profile,
    ks_stat,
    mle_fit,
    rank_families,
)
from .simulate import (
    Ensemble,
    JointPath,
    SimConfig,
    VariancePath,
    simulate_ensemble,
    simulate_joint_path,
    simulate_variance_path,
)
from .relaxation import (
    CumulantCurve,
    EigenMode,
    HestonUnitParams,
    RelaxationConfig,
    RelaxationResult,
    RelaxationSample,
    RelaxationStudy,
    eigenfunction_eval,
    eigenfunction_p1,
    eigenmode,
    empirical_cumulants,
    g_coefficient,
    ks_curve,
    measure_relaxation_time,
    ode_residual,
    relaxation_experiment,
    theory_cumulant,
)
from .io import (
    RunManifest,
    file_sha256,
    read_ensemble,
    read_prices,
    read_returns,
    read_series,
    write_ensemble,
    write_prices,
    write_returns,
    write_series,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ParameterError",
    "DomainError",
    "DivergentMomentError",
    "FitError",
    "InputError",
    "ExperimentError",
    "MeanRevertingParams",
    "GB2Params",
    "SteadyStateDist",
    "steady_state_of",
    "stationary_variance",
    "reduced_covariance",
    "variance_autocorr",
    "leverage_amplitude",
    "leverage_function",
    "SimConfig",
    "VariancePath",
    "JointPath",
    "Ensemble",
    "simulate_variance_path",
    "simulate_joint_path",
    "simulate_ensemble",
    "ReturnSeries",
    "CorrSeries",
    "LeverageSeries",
    "detrend",
    "accumulate_returns",
    "theta_hat",
    "daily_var_corr",
    "multiday_var_corr",
    "moment_ratio",
    "reduced_var_cov",
    "leverage_series",
    "ExpFit",
    "ExpOffsetFit",
    "QuadRatioFit",
    "Gamma1Profile",
    "CalibrationReport",
    "MleReport",
    "FAMILIES",
    "fit_exp",
    "fit_exp_amplitude",
    "fit_exp_offset",
    "fit_ratio_quadratic",
    "gamma1_profile",
    "calibrate",
    "mle_fit",
    "rank_families",
    "ks_stat",
    "HestonUnitParams",
    "EigenMode",
    "CumulantCurve",
    "RelaxationSample",
    "RelaxationConfig",
    "RelaxationResult",
    "RelaxationStudy",
    "eigenmode",
    "eigenfunction_eval",
    "eigenfunction_p1",
    "ode_residual",
    "g_coefficient",
    "theory_cumulant",
    "RunManifest",
    "file_sha256",
    "read_ensemble",
    "read_prices",
    "read_returns",
    "read_series",
    "write_ensemble",
    "write_prices",
    "write_returns",
    "write_series",
    "empirical_cumulants",
    "ks_curve",
    "measure_relaxation_time",
    "relaxation_experiment",
]
