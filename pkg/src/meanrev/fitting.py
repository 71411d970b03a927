"""Curve fits, the calibration pipeline, and MLE model selection.

Three curve-fit shapes cover every series produced by the estimators:
``a * exp(-gamma * tau)`` for correlation decays, ``a + (b - a) * exp(-lambda t)``
for the gamma_1 horizon profile, and ``a - b (tau/t) + c (tau/t)^2`` for the
moment ratio.  Nonlinear fits run damped least squares (Levenberg-Marquardt
via :func:`scipy.optimize.curve_fit`) from a log-linear initial guess.

:func:`calibrate` chains the estimators into a six-step parameter recovery:

1. gamma from an exponential fit to the daily variance autocorrelation;
2. theta as the mean squared daily return;
3. the reduced variance autocovariance series from squared returns;
4. its amplitude A at fixed gamma, so that A estimates var[v]/theta**2;
5. noise amplitudes from the single-noise inversions
   ``kappa_m**2 = 2 gamma A / (1 + A)`` and ``kappa_h**2 = 2 gamma theta A``;
6. rho and an independent decay rate from a signed exponential fit to the
   leverage series, with the amplitude conversions of
   :func:`meanrev.models.leverage_amplitude`.

:func:`mle_fit` fits one of six positive-support or location families by
maximum likelihood (closed forms where they exist, safeguarded Newton for
the Gamma and Weibull profile equations, Gamma-on-reciprocals for the
Inverse Gamma) and reports the one-sample Kolmogorov-Smirnov statistic of
the fitted distribution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .errors import DivergentMomentError, DomainError, FitError, ParameterError
from .estimators import (
    CorrSeries,
    LeverageSeries,
    ReturnSeries,
    accumulate_returns,
    daily_var_corr,
    leverage_series,
    multiday_var_corr,
    reduced_var_cov,
    theta_hat,
)
from .models import MeanRevertingParams, leverage_amplitude

__all__ = [
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
]

_MAXFEV = 500
_XTOL = 1e-10


# -- fit result types --------------------------------------------------------


@dataclass(frozen=True)
class ExpFit:
    """Least-squares fit of ``a * exp(-gamma * tau)``."""

    a: float
    gamma: float
    r2: float


@dataclass(frozen=True)
class ExpOffsetFit:
    """Least-squares fit of ``a + (b - a) * exp(-lam * t)``.

    ``a`` is the asymptote, ``b`` the value at t = 0.
    """

    a: float
    b: float
    lam: float
    r2: float


@dataclass(frozen=True)
class QuadRatioFit:
    """Linear fit of ``a - b * (tau/t) + c * (tau/t)**2`` over t >= tau."""

    a: float
    b: float
    c: float
    r2: float


@dataclass(frozen=True, eq=False)
class Gamma1Profile:
    """Per-horizon decay rates of the multi-day variance correlation.

    ``fits[i]`` is the exponential fit at ``horizons[i]`` or None when that
    fit failed; failures map the horizon to the reason.  ``offset_fit``
    summarizes gamma_1(t) for ``t >= offset_min_t`` and is None when fewer
    than three fits are available there.
    """

    horizons: np.ndarray
    fits: tuple
    failures: dict
    offset_fit: ExpOffsetFit | None
    offset_min_t: int

    def rates(self) -> np.ndarray:
        """gamma_1 per horizon, NaN where the fit failed."""
        return np.array([f.gamma if f is not None else np.nan for f in self.fits])


@dataclass(frozen=True)
class CalibrationReport:
    """Recovered model parameters plus per-step diagnostics.

    ``amplitude`` is the fitted reduced-covariance amplitude A, the estimate
    of var[v]/theta**2.  ``rho_m`` and ``rho_h`` interpret the leverage
    amplitude under the proportional-only and square-root-only models; the
    two noise amplitudes cannot be identified jointly from this procedure.
    NaN fields mean the corresponding step failed; ``flags`` says why, and
    records stationarity constraints violated by the recovered parameters.
    """

    gamma: float
    theta: float
    kappa_m: float
    kappa_h: float
    rho_m: float
    rho_h: float
    gamma_lev: float
    amplitude: float
    diagnostics: dict = field(default_factory=dict)
    flags: tuple = ()


@dataclass(frozen=True)
class MleReport:
    """Maximum-likelihood fit of one distribution family.

    ``params`` order per family: normal (mean, std), lognormal
    (mu_log, sigma_log), gamma/invgamma/weibull (shape, scale),
    invgauss (mean, shape).
    """

    family: str
    params: tuple
    param_names: tuple
    ks: float
    loglik: float
    n: int

    def named_params(self) -> dict:
        return dict(zip(self.param_names, self.params))


# -- generic fitting helpers -------------------------------------------------


def _series_arrays(series, lag_range) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, (CorrSeries, LeverageSeries)):
        lags, values = series.lags, series.values
    else:
        lags, values = series
        lags = np.asarray(lags, dtype=float)
        values = np.asarray(values, dtype=float)
    if lags.shape != values.shape or lags.ndim != 1:
        raise ParameterError("lags and values must be aligned one-dimensional arrays")
    if lag_range is not None:
        lo, hi = lag_range
        keep = (lags >= lo) & (lags <= hi)
        lags, values = lags[keep], values[keep]
    return np.asarray(lags, dtype=float), values


def _r2(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def _curve_fit(func, x, y, p0, maxfev=_MAXFEV) -> np.ndarray:
    # we never use the covariance, so silence its degenerate-fit warning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        popt, _ = optimize.curve_fit(func, x, y, p0=p0, xtol=_XTOL, maxfev=maxfev)
    return popt


def _loglinear_init(lags: np.ndarray, values: np.ndarray) -> tuple[float, float, np.ndarray]:
    pos = values > 0
    if pos.sum() < 2:
        raise FitError(
            "exponential fit needs at least two positive values for initialization",
            residuals=values,
        )
    slope, intercept = np.polyfit(lags[pos], np.log(values[pos]), 1)
    a0 = math.exp(intercept)
    gamma0 = max(-slope, 1e-6)
    return a0, gamma0, values - a0 * np.exp(-gamma0 * lags)


def fit_exp(series, lag_range=None) -> ExpFit:
    """Fit ``a * exp(-gamma * tau)`` to a correlation-style series.

    ``series`` is a CorrSeries, a LeverageSeries, or a ``(lags, values)``
    pair; ``lag_range = (lo, hi)`` restricts the fit window.

    Raises
    ------
    FitError
        On non-convergence or when the fitted decay rate is not positive;
        ``residuals`` carries the last residual vector.
    """
    lags, values = _series_arrays(series, lag_range)
    if lags.size < 3:
        raise FitError(f"exponential fit needs at least 3 points, got {lags.size}")
    a0, gamma0, init_resid = _loglinear_init(lags, values)
    try:
        popt = _curve_fit(lambda t, a, g: a * np.exp(-g * t), lags, values, p0=(a0, gamma0))
    except RuntimeError as exc:
        raise FitError(f"exponential fit did not converge: {exc}", residuals=init_resid)
    a, gamma = float(popt[0]), float(popt[1])
    fitted = a * np.exp(-gamma * lags)
    if gamma <= 0:
        raise FitError(
            f"fitted decay rate is not positive: gamma = {gamma:.4g}",
            residuals=values - fitted,
        )
    return ExpFit(a=a, gamma=gamma, r2=_r2(values, fitted))


def fit_exp_amplitude(series, gamma: float, lag_range=None) -> tuple[float, float]:
    """Amplitude-only fit of ``A * exp(-gamma * tau)`` at fixed gamma.

    Returns ``(A, r2)``; A has the closed form of linear least squares on
    the single basis function exp(-gamma * tau).
    """
    if not gamma > 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")
    lags, values = _series_arrays(series, lag_range)
    if lags.size < 1:
        raise FitError("amplitude fit needs at least 1 point")
    basis = np.exp(-gamma * lags)
    amp = float(values @ basis / (basis @ basis))
    return amp, _r2(values, amp * basis)


def fit_exp_offset(ts, values) -> ExpOffsetFit:
    """Fit ``a + (b - a) * exp(-lam * t)`` to a rate-versus-horizon profile."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.shape != values.shape or ts.ndim != 1:
        raise ParameterError("ts and values must be aligned one-dimensional arrays")
    if ts.size < 3:
        raise FitError(f"offset fit needs at least 3 points, got {ts.size}")
    a0, b0 = float(values[-1]), float(values[0])
    lam0 = 1.0 / max(float(ts.mean()), 1e-12)
    try:
        popt = _curve_fit(
            lambda t, a, b, lam: a + (b - a) * np.exp(-lam * t),
            ts,
            values,
            p0=(a0, b0, lam0),
            maxfev=2 * _MAXFEV,
        )
    except RuntimeError as exc:
        raise FitError(f"offset fit did not converge: {exc}")
    a, b, lam = map(float, popt)
    fitted = a + (b - a) * np.exp(-lam * ts)
    if lam <= 0:
        raise FitError(f"fitted rate is not positive: lam = {lam:.4g}", residuals=values - fitted)
    return ExpOffsetFit(a=a, b=b, lam=lam, r2=_r2(values, fitted))


def fit_ratio_quadratic(ts, values, tau: int) -> QuadRatioFit:
    """Fit ``a - b (tau/t) + c (tau/t)**2`` to moment ratios over t >= tau.

    Linear least squares in the basis {1, tau/t, (tau/t)**2}; points with
    t < tau are excluded.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.shape != values.shape or ts.ndim != 1:
        raise ParameterError("ts and values must be aligned one-dimensional arrays")
    if not tau >= 1:
        raise ParameterError(f"tau must be >= 1, got {tau}")
    keep = ts >= tau
    ts, values = ts[keep], values[keep]
    if np.unique(ts).size < 3:
        raise FitError(f"quadratic ratio fit needs 3 distinct horizons >= tau, got {np.unique(ts).size}")
    u = tau / ts
    design = np.column_stack([np.ones_like(u), -u, u * u])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    fitted = design @ coef
    return QuadRatioFit(a=float(coef[0]), b=float(coef[1]), c=float(coef[2]), r2=_r2(values, fitted))


# -- gamma_1 horizon profile -------------------------------------------------


def gamma1_profile(returns: ReturnSeries, t_grid, tau_max: int, offset_min_t: int = 21) -> Gamma1Profile:
    """Decay rate of the multi-day variance correlation per horizon.

    For each t in ``t_grid`` accumulates the daily series over rolling
    t-day windows, estimates the squared-return correlation out to
    ``tau_max`` days, and fits an exponential.  Individual fit failures are
    recorded per horizon rather than raised.  The gamma_1(t) values at
    ``t >= offset_min_t`` are then summarized by an offset-exponential fit.
    """
    t_grid = np.asarray(t_grid, dtype=int)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ParameterError("t_grid must be a non-empty one-dimensional collection")
    fits: list[ExpFit | None] = []
    failures: dict[int, str] = {}
    for t in t_grid:
        try:
            acc = accumulate_returns(returns, int(t), mode="rolling")
            series = multiday_var_corr(acc, tau_max)
            fits.append(fit_exp(series, lag_range=(1, tau_max)))
        except (FitError, ParameterError, DomainError) as exc:
            fits.append(None)
            failures[int(t)] = str(exc)
    tail = [
        (int(t), f.gamma)
        for t, f in zip(t_grid, fits)
        if f is not None and t >= offset_min_t
    ]
    offset_fit = None
    if len(tail) >= 3:
        try:
            offset_fit = fit_exp_offset([p[0] for p in tail], [p[1] for p in tail])
        except FitError:
            offset_fit = None
    return Gamma1Profile(
        horizons=t_grid,
        fits=tuple(fits),
        failures=failures,
        offset_fit=offset_fit,
        offset_min_t=offset_min_t,
    )


# -- calibration pipeline ----------------------------------------------------


def _fit_signed_exp(lev: LeverageSeries, gamma_fallback: float) -> tuple[float, float, float, bool]:
    """Fit ``c * exp(-g * tau)`` allowing either sign of c.

    Returns ``(c, g, r2, fell_back)``; falls back to an amplitude-only fit
    at ``gamma_fallback`` when the two-parameter fit does not converge to a
    positive decay rate.
    """
    lags = lev.lags.astype(float)
    values = lev.values
    sign = -1.0 if values.sum() < 0 else 1.0
    c0, _ = fit_exp_amplitude((lags, sign * values), gamma_fallback)
    try:
        popt = _curve_fit(
            lambda t, c, g: c * np.exp(-g * t), lags, sign * values, p0=(c0, gamma_fallback)
        )
        c, g = float(popt[0]), float(popt[1])
        if g > 0:
            fitted = c * np.exp(-g * lags)
            return sign * c, g, _r2(sign * values, fitted), False
    except RuntimeError:
        pass
    amp, r2 = fit_exp_amplitude((lags, sign * values), gamma_fallback)
    return sign * amp, gamma_fallback, r2, True


def calibrate(returns: ReturnSeries, tau_max: int = 100) -> CalibrationReport:
    """Six-step parameter recovery from daily detrended returns.

    Any failing step leaves its fields NaN and appends a flag; later steps
    that depend on it are skipped.  Flags also record violated stationarity
    constraints of the recovered single-noise models.
    """
    diagnostics: dict = {"tau_max": int(tau_max), "n_obs": len(returns)}
    flags: list[str] = []
    gamma = theta = kappa_m = kappa_h = amplitude = np.nan
    rho_m = rho_h = gamma_lev = np.nan

    try:
        corr = daily_var_corr(returns, tau_max)
        step1 = fit_exp(corr, lag_range=(1, tau_max))
        gamma = step1.gamma
        diagnostics["corr_fit"] = step1
    except (FitError, DomainError) as exc:
        flags.append(f"variance-correlation fit failed: {exc}")

    theta = theta_hat(returns)
    diagnostics["theta"] = theta

    if math.isfinite(gamma):
        try:
            reduced = reduced_var_cov(returns, tau_max)
            amplitude, amp_r2 = fit_exp_amplitude(reduced, gamma)
            diagnostics["amplitude_r2"] = amp_r2
            if amplitude <= 0:
                flags.append(f"reduced-covariance amplitude is not positive: {amplitude:.4g}")
                amplitude = np.nan
        except (FitError, DomainError) as exc:
            flags.append(f"reduced-covariance fit failed: {exc}")

    if math.isfinite(amplitude):
        kappa_m = math.sqrt(2.0 * gamma * amplitude / (1.0 + amplitude))
        kappa_h = math.sqrt(2.0 * gamma * theta * amplitude)
        p_hat = 2.0 * gamma * theta / kappa_h**2
        q_hat = 1.0 + 2.0 * gamma / kappa_m**2
        if p_hat <= 1.0:
            flags.append(
                f"square-root-only reading violates p > 1 (p = {p_hat:.4g}): "
                "its stationary density would not vanish at the origin"
            )
        if q_hat <= 2.0:
            flags.append(
                f"proportional-only reading violates q > 2 (q = {q_hat:.4g}): "
                "its stationary variance would diverge"
            )

    if math.isfinite(gamma) and math.isfinite(amplitude):
        try:
            lev = leverage_series(returns, tau_max)
            c, gamma_lev, lev_r2, fell_back = _fit_signed_exp(lev, gamma)
            diagnostics["leverage_r2"] = lev_r2
            if fell_back:
                flags.append(
                    "leverage decay fit unstable; amplitude fitted at the "
                    "correlation-derived gamma"
                )
            if kappa_m > 0:
                amp_m = leverage_amplitude(
                    MeanRevertingParams(gamma=gamma, theta=theta, kappa_m=kappa_m, validate=False)
                )
                rho_m = c / amp_m
            if kappa_h > 0:
                rho_h = c * theta / kappa_h
        except (FitError, DomainError, DivergentMomentError) as exc:
            flags.append(f"leverage fit failed: {exc}")

    return CalibrationReport(
        gamma=float(gamma),
        theta=float(theta),
        kappa_m=float(kappa_m),
        kappa_h=float(kappa_h),
        rho_m=float(rho_m),
        rho_h=float(rho_h),
        gamma_lev=float(gamma_lev),
        amplitude=float(amplitude),
        diagnostics=diagnostics,
        flags=tuple(flags),
    )


# -- maximum likelihood model selection ---------------------------------------

FAMILIES = ("normal", "lognormal", "gamma", "invgamma", "weibull", "invgauss")

_POSITIVE_SUPPORT = ("lognormal", "gamma", "invgamma", "weibull", "invgauss")


def _newton_gamma_shape(x: np.ndarray) -> tuple[float, float]:
    m = float(x.mean())
    s = math.log(m) - float(np.mean(np.log(x)))
    if s <= 0:
        raise FitError("degenerate sample for gamma fit: no log dispersion")
    k = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(100):
        f = math.log(k) - float(special.digamma(k)) - s
        fp = 1.0 / k - float(special.polygamma(1, k))
        k_new = k - f / fp
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) <= 1e-12 * k:
            return k_new, m / k_new
        k = k_new
    raise FitError("gamma shape iteration did not converge")


def _newton_weibull_shape(x: np.ndarray) -> tuple[float, float]:
    lx = np.log(x)
    mean_lx = float(lx.mean())
    sd_lx = float(lx.std())
    if sd_lx == 0:
        raise FitError("degenerate sample for weibull fit: no log dispersion")
    lx_max = float(lx.max())
    k = 1.2 / sd_lx

    def profile(k: float) -> tuple[float, float]:
        w = np.exp(k * (lx - lx_max))
        s0 = float(w.sum())
        s1 = float((w * lx).sum())
        s2 = float((w * lx * lx).sum())
        f = s1 / s0 - 1.0 / k - mean_lx
        fp = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k)
        return f, fp

    for _ in range(100):
        f, fp = profile(k)
        k_new = k - f / fp
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) <= 1e-12 * k:
            k = k_new
            break
        k = k_new
    else:
        raise FitError("weibull shape iteration did not converge")
    w = np.exp(k * (lx - lx_max))
    scale = math.exp(lx_max + math.log(float(w.mean())) / k)
    return k, scale


def _frozen_dist(family: str, params: tuple):
    a, b = params
    if family == "normal":
        return stats.norm(loc=a, scale=b)
    if family == "lognormal":
        return stats.lognorm(b, scale=math.exp(a))
    if family == "gamma":
        return stats.gamma(a, scale=b)
    if family == "invgamma":
        return stats.invgamma(a, scale=b)
    if family == "weibull":
        return stats.weibull_min(a, scale=b)
    return stats.invgauss(a / b, scale=b)


_PARAM_NAMES = {
    "normal": ("mean", "std"),
    "lognormal": ("mu_log", "sigma_log"),
    "gamma": ("shape", "scale"),
    "invgamma": ("shape", "scale"),
    "weibull": ("shape", "scale"),
    "invgauss": ("mean", "shape"),
}


def mle_fit(samples, family: str) -> MleReport:
    """Maximum-likelihood fit of one family plus its KS distance.

    Families: normal, lognormal, gamma, invgamma, weibull, invgauss.
    Positive-support families require strictly positive samples.

    Raises
    ------
    ParameterError
        Unknown family or fewer than 10 samples.
    DomainError
        Non-positive samples handed to a positive-support family.
    FitError
        Degenerate samples (no dispersion) or iteration failure.
    """
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}; choose from {FAMILIES}")
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ParameterError(f"need a one-dimensional sample of at least 10 values, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    if family in _POSITIVE_SUPPORT and np.any(x <= 0):
        raise DomainError(f"family {family!r} requires strictly positive samples")
    if np.ptp(x) == 0:
        raise FitError("degenerate sample: all values equal")

    if family == "normal":
        sd = float(x.std())
        if sd == 0:
            raise FitError("degenerate sample: zero variance")
        params = (float(x.mean()), sd)
    elif family == "lognormal":
        lx = np.log(x)
        sd = float(lx.std())
        if sd == 0:
            raise FitError("degenerate sample: zero log variance")
        params = (float(lx.mean()), sd)
    elif family == "gamma":
        params = _newton_gamma_shape(x)
    elif family == "invgamma":
        shape, scale_recip = _newton_gamma_shape(1.0 / x)
        params = (shape, 1.0 / scale_recip)
    elif family == "weibull":
        params = _newton_weibull_shape(x)
    else:  # invgauss
        mu = float(x.mean())
        d = float(np.sum(1.0 / x - 1.0 / mu))
        if d <= 0:
            raise FitError("degenerate sample for inverse gaussian fit")
        params = (mu, x.size / d)

    dist = _frozen_dist(family, params)
    return MleReport(
        family=family,
        params=tuple(float(p) for p in params),
        param_names=_PARAM_NAMES[family],
        ks=ks_stat(x, dist.cdf),
        loglik=float(np.sum(dist.logpdf(x))),
        n=int(x.size),
    )


def rank_families(samples, families=FAMILIES) -> list[MleReport]:
    """Fit every family and return the reports sorted by ascending KS."""
    reports = [mle_fit(samples, family) for family in families]
    return sorted(reports, key=lambda r: r.ks)


def ks_stat(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic against a CDF callable."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ParameterError("samples must be nonempty")
    f = np.asarray(cdf(x), dtype=float)
    grid = np.arange(n, dtype=float)
    d_plus = float(np.max((grid + 1.0) / n - f))
    d_minus = float(np.max(f - grid / n))
    return max(d_plus, d_minus)
