"""Realized-variance and leverage estimators over detrended return series.

These estimators turn detrended log returns into the moment ratios that the
mean-reverting variance models predict in closed form:

* :func:`daily_var_corr` estimates the variance autocorrelation from daily
  returns; the 1/3 in its denominator removes the combinatorial factor by
  which a Gaussian fourth moment exceeds ``<v**2>``, so its infinite-sample
  limit under the model is ``exp(-gamma * tau)``.
* :func:`multiday_var_corr` is the analogous correlation of squared t-day
  accumulated returns, whose fitted decay rate defines ``gamma_1(t)``.
* :func:`moment_ratio` is ``<dx_t^2 dx_{t+tau}^2> / <dx_t^4>`` over rolling
  t-day windows tau days apart; for slowly varying variance it approaches
  ``1 - 4 tau/(3 t) + 2 tau^2/(3 t^2)`` when ``t >= tau`` and ``1/3`` when
  ``t <= tau``.
* :func:`reduced_var_cov` estimates ``cov[v_t, v_{t+tau}] / theta**2`` from
  squared daily returns, the quantity
  :func:`meanrev.models.reduced_covariance` computes analytically.
* :func:`leverage_series` is ``<dx_{t+tau}^2 dx_t> / <dx_t^2>^2``, negative
  at small lags when downward returns precede elevated variance.

All expectations are plain sample means over the series; no overlap or bias
corrections are applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError, ParameterError

__all__ = [
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
]


def _as_series_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise InputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise InputError(f"{name} contains a non-finite value at index {bad}")
    return arr


def _check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value}")
    return int(value)


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Detrended log returns at a fixed accumulation horizon.

    Parameters
    ----------
    values : array_like
        Return values.  A daily series has ``horizon = stride = 1``.
    horizon : int
        Accumulation window length t in days.
    stride : int
        Days between the starts of consecutive values: 1 for rolling
        accumulation, ``horizon`` for disjoint windows.
    source : str
        Free-form provenance tag carried into estimator outputs.
    """

    values: np.ndarray
    horizon: int = 1
    stride: int = 1
    source: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_series_array(self.values, "returns"))
        object.__setattr__(self, "horizon", _check_positive_int(self.horizon, "horizon"))
        object.__setattr__(self, "stride", _check_positive_int(self.stride, "stride"))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class CorrSeries:
    """A correlation-style estimator evaluated on a grid of day lags."""

    lags: np.ndarray
    values: np.ndarray
    estimator: str  # "daily-corr", "multiday-corr", "ratio" or "reduced-cov"
    horizon: int
    stride: int
    n_obs: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "lags", np.asarray(self.lags, dtype=int))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.lags.shape != self.values.shape:
            raise ParameterError(
                f"lags and values must align, got {self.lags.shape} vs {self.values.shape}"
            )


@dataclass(frozen=True, eq=False)
class LeverageSeries:
    """Return/variance cross-correlation values on a grid of day lags."""

    lags: np.ndarray
    values: np.ndarray
    horizon: int
    n_obs: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "lags", np.asarray(self.lags, dtype=int))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.lags.shape != self.values.shape:
            raise ParameterError(
                f"lags and values must align, got {self.lags.shape} vs {self.values.shape}"
            )


def detrend(prices) -> ReturnSeries:
    """Daily detrended log returns from a positive price series.

    Log price differences minus their full-sample mean, so a purely
    geometric trend maps to an all-zero series.

    Raises
    ------
    InputError
        On fewer than two prices or any non-positive price (the offending
        index is reported).
    """
    arr = np.asarray(prices, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"prices must be one-dimensional, got shape {arr.shape}")
    if arr.size < 2:
        raise InputError(f"need at least 2 prices to form returns, got {arr.size}")
    bad = np.flatnonzero(~(np.isfinite(arr) & (arr > 0)))
    if bad.size:
        i = int(bad[0])
        raise InputError(f"price at index {i} is not a positive number: {arr[i]}")
    r = np.diff(np.log(arr))
    return ReturnSeries(values=r - r.mean(), horizon=1, stride=1, source="detrended-prices")


def accumulate_returns(returns, t: int, mode: str = "rolling") -> ReturnSeries:
    """Sum daily returns over t-day windows.

    ``rolling`` advances window starts by one day, ``disjoint`` by t days.
    Accepts a daily :class:`ReturnSeries` or a plain array of daily returns.
    """
    if isinstance(returns, ReturnSeries):
        if returns.horizon != 1 or returns.stride != 1:
            raise ParameterError(
                "accumulation expects a daily series (horizon 1, stride 1), got "
                f"horizon {returns.horizon}, stride {returns.stride}"
            )
        x, source = returns.values, returns.source
    else:
        x, source = _as_series_array(returns, "returns"), ""
    t = _check_positive_int(t, "window length")
    if t > x.size:
        raise ParameterError(f"window length {t} exceeds series length {x.size}")
    if mode not in ("rolling", "disjoint"):
        raise ParameterError(f'mode must be "rolling" or "disjoint", got {mode!r}')
    if t == 1:
        sums = x.copy()
    else:
        c = np.concatenate(([0.0], np.cumsum(x)))
        sums = c[t:] - c[:-t]
    if mode == "disjoint":
        sums = sums[::t]
    return ReturnSeries(values=sums, horizon=t, stride=1 if mode == "rolling" else t, source=source)


def theta_hat(returns: ReturnSeries) -> float:
    """Mean variance per day: the mean squared return divided by the horizon."""
    return float(np.mean(returns.values**2) / returns.horizon)


def _check_daily(returns: ReturnSeries, what: str) -> None:
    if returns.horizon != 1 or returns.stride != 1:
        raise ParameterError(
            f"{what} requires a daily series (horizon 1, stride 1), got "
            f"horizon {returns.horizon}, stride {returns.stride}"
        )


def _lagged_mean(a: np.ndarray, b: np.ndarray, lag: int) -> float:
    # mean of a[s] * b[s + lag] over the n - lag available pairs
    if lag == 0:
        return float(np.mean(a * b))
    return float(np.mean(a[:-lag] * b[lag:]))


def _lag_indices(tau_max, stride: int, size: int, include_zero: bool) -> np.ndarray:
    tau_max = _check_positive_int(tau_max, "tau_max")
    if tau_max < stride:
        raise ParameterError(f"tau_max {tau_max} is below the series stride {stride}")
    k_max = tau_max // stride
    if k_max >= size:
        raise ParameterError(
            f"tau_max {tau_max} leaves no lagged pairs in a series of {size} values"
        )
    return np.arange(0 if include_zero else 1, k_max + 1)


def daily_var_corr(returns: ReturnSeries, tau_max: int) -> CorrSeries:
    """Variance-autocorrelation estimate from daily returns.

    At each lag tau in [1, tau_max] computes

        (<dx_t^2 dx_{t+tau}^2> - <dx^2>^2) / ((1/3) <dx^4> - <dx^2>^2).

    Raises
    ------
    DomainError
        If the denominator is not positive (sample without excess
        kurtosis, e.g. constant-magnitude returns).
    """
    _check_daily(returns, "daily_var_corr")
    ks = _lag_indices(tau_max, 1, returns.values.size, include_zero=False)
    x2 = returns.values**2
    m2 = float(x2.mean())
    m4 = float(np.mean(x2 * x2))
    denom = m4 / 3.0 - m2 * m2
    if denom <= 0:
        raise DomainError("degenerate sample: (1/3)<dx^4> - <dx^2>^2 <= 0")
    vals = np.array([(_lagged_mean(x2, x2, int(k)) - m2 * m2) / denom for k in ks])
    return CorrSeries(
        lags=ks,
        values=vals,
        estimator="daily-corr",
        horizon=1,
        stride=1,
        n_obs=returns.values.size,
    )


def multiday_var_corr(returns: ReturnSeries, tau_max: int) -> CorrSeries:
    """Correlation of squared accumulated returns at day lags.

    At day lag tau (a multiple of the series stride) computes

        (<dx_t^2 dx_{t+tau}^2> - <dx_t^2>^2) / (<dx_t^4> - <dx_t^2>^2),

    which equals 1 at tau = 0 by construction.  The decay rate of an
    exponential fit to this series is the effective rate gamma_1 for the
    accumulation horizon.
    """
    ks = _lag_indices(tau_max, returns.stride, returns.values.size, include_zero=True)
    x2 = returns.values**2
    m2 = float(x2.mean())
    m4 = float(np.mean(x2 * x2))
    denom = m4 - m2 * m2
    if denom <= 0:
        raise DomainError("degenerate sample: <dx^4> - <dx^2>^2 <= 0")
    vals = np.array([(_lagged_mean(x2, x2, int(k)) - m2 * m2) / denom for k in ks])
    return CorrSeries(
        lags=ks * returns.stride,
        values=vals,
        estimator="multiday-corr",
        horizon=returns.horizon,
        stride=returns.stride,
        n_obs=returns.values.size,
    )


def moment_ratio(returns: ReturnSeries, t: int, tau: int) -> float:
    """``<dx_t^2 dx_{t+tau}^2> / <dx_t^4>`` over rolling t-day windows.

    The two windows both span t days and start tau days apart.  For
    slowly varying variance (tau much smaller than 1/gamma) the ratio
    approaches ``1 - 4 tau/(3 t) + 2 tau^2/(3 t^2)`` for ``t >= tau`` and
    ``1/3`` for ``t <= tau``.
    """
    _check_daily(returns, "moment_ratio")
    tau = _check_positive_int(tau, "tau")
    y = accumulate_returns(returns, t, mode="rolling").values
    if tau >= y.size:
        raise ParameterError(
            f"insufficient data: lag {tau} leaves no pairs of {t}-day windows"
        )
    y2 = y * y
    m4 = float(np.mean(y2 * y2))
    if m4 <= 0:
        raise DomainError("degenerate sample: all accumulated returns are zero")
    return _lagged_mean(y2, y2, tau) / m4


def reduced_var_cov(returns: ReturnSeries, tau_max: int) -> CorrSeries:
    """Reduced variance autocovariance from squared daily returns.

    At each lag tau in [1, tau_max] computes

        (<dx_t^2 dx_{t+tau}^2> - <dx^2>^2) / <dx^2>^2,

    whose infinite-sample limit under the model is
    ``var[v]/theta**2 * exp(-gamma tau)``.
    """
    _check_daily(returns, "reduced_var_cov")
    ks = _lag_indices(tau_max, 1, returns.values.size, include_zero=False)
    x2 = returns.values**2
    m2 = float(x2.mean())
    if m2 <= 0:
        raise DomainError("degenerate sample: all returns are zero")
    vals = np.array([(_lagged_mean(x2, x2, int(k)) - m2 * m2) / (m2 * m2) for k in ks])
    return CorrSeries(
        lags=ks,
        values=vals,
        estimator="reduced-cov",
        horizon=1,
        stride=1,
        n_obs=returns.values.size,
    )


def leverage_series(returns: ReturnSeries, tau_max: int) -> LeverageSeries:
    """Leverage ``<dx_{t+tau}^2 dx_t> / <dx_t^2>^2`` at lags in [1, tau_max].

    Negative values at small lags mean downward returns precede elevated
    variance.  Scales as 1/c when returns are scaled by c, and flips sign
    under a sign flip of the series.
    """
    ks = _lag_indices(tau_max, returns.stride, returns.values.size, include_zero=False)
    x = returns.values
    x2 = x * x
    m2 = float(x2.mean())
    if m2 <= 0:
        raise DomainError("degenerate sample: all returns are zero")
    vals = np.array([_lagged_mean(x, x2, int(k)) / (m2 * m2) for k in ks])
    return LeverageSeries(
        lags=ks * returns.stride,
        values=vals,
        horizon=returns.horizon,
        n_obs=returns.values.size,
    )
