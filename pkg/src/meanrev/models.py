"""Mean-reverting stochastic variance models and their closed-form statistics.

The models describe de-trended log returns ``dx = sigma dW1`` whose
instantaneous variance ``v = sigma**2`` follows a mean-reverting SDE

    dv = -gamma * (v - theta) dt + g(v) dW2,
    dW2 = rho dW1 + sqrt(1 - rho**2) dZ,

with diffusion ``g(v)**2 = kappa_m**2 * v**2 + kappa_h**2 * v``.  The two
noise terms can act alone or combined:

* ``kappa_m = 0`` (square-root noise only): the stationary density of v is
  a Gamma distribution.
* ``kappa_h = 0`` (proportional noise only): the stationary density is an
  Inverse Gamma distribution.
* both positive: the stationary density is a Beta Prime distribution.

A generalized family replaces the linear reversion target by
``theta * v**(1 - alpha)`` and the diffusion by
``kappa2**2 * v**2 + kappa_alpha**2 * v**(2 - alpha)``; its stationary
density is a GB2 (generalized beta of the second kind).

All heavy-tailed algebra is done with log-Gamma/log-Beta arithmetic, and
moments that do not exist raise :class:`~meanrev.errors.DivergentMomentError`
rather than returning infinities.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass

import numpy as np
from scipy import special, stats

from .errors import DivergentMomentError, DomainError, ParameterError

__all__ = [
    "MeanRevertingParams",
    "GB2Params",
    "SteadyStateDist",
    "steady_state_of",
    "stationary_variance",
    "reduced_covariance",
    "variance_autocorr",
    "leverage_amplitude",
    "leverage_function",
]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ParameterError(message)


@dataclass(frozen=True)
class MeanRevertingParams:
    """Parameters of the combined multiplicative / square-root variance model.

    Parameters
    ----------
    gamma : float
        Mean-reversion rate (1/day), > 0.
    theta : float
        Stationary mean of the variance, > 0.
    kappa_m : float
        Amplitude of the multiplicative (proportional) noise, >= 0.
    kappa_h : float
        Amplitude of the square-root noise, >= 0.
    rho : float
        Correlation between return noise and variance noise, in [-1, 1].
    validate : bool
        When True (default) enforce the stationary-density constraints
        ``2*gamma*theta > kappa_h**2`` (density vanishes at the origin) and
        ``2*gamma > kappa_m**2`` (stationary variance exists).  Pass False
        to build intentionally out-of-domain parameter sets.
    """

    gamma: float
    theta: float
    kappa_m: float = 0.0
    kappa_h: float = 0.0
    rho: float = 0.0
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        _require(self.gamma > 0, f"gamma must be > 0, got {self.gamma}")
        _require(self.theta > 0, f"theta must be > 0, got {self.theta}")
        _require(self.kappa_m >= 0, f"kappa_m must be >= 0, got {self.kappa_m}")
        _require(self.kappa_h >= 0, f"kappa_h must be >= 0, got {self.kappa_h}")
        _require(-1.0 <= self.rho <= 1.0, f"rho must lie in [-1, 1], got {self.rho}")
        if validate:
            if self.kappa_h > 0:
                _require(
                    2.0 * self.gamma * self.theta > self.kappa_h**2,
                    "square-root noise too strong: need 2*gamma*theta > kappa_h**2 "
                    f"(got 2*{self.gamma}*{self.theta} <= {self.kappa_h}**2)",
                )
            if self.kappa_m > 0:
                _require(
                    2.0 * self.gamma > self.kappa_m**2,
                    "proportional noise too strong: need 2*gamma > kappa_m**2 "
                    f"(got 2*{self.gamma} <= {self.kappa_m}**2)",
                )

    def diffusion_squared(self, v: np.ndarray) -> np.ndarray:
        """Evaluate g(v)**2 = kappa_m**2 v**2 + kappa_h**2 v."""
        v = np.asarray(v, dtype=float)
        return self.kappa_m**2 * v * v + self.kappa_h**2 * v


@dataclass(frozen=True)
class GB2Params:
    """Parameters of the generalized model with exponent ``alpha``.

    The variance SDE is

        dv = -gamma * (v - theta * v**(1 - alpha)) dt
             + sqrt(kappa2**2 * v**2 + kappa_alpha**2 * v**(2 - alpha)) dW2.

    ``alpha = 1`` reduces to :class:`MeanRevertingParams` with
    ``kappa2 -> kappa_m`` and ``kappa_alpha -> kappa_h``.
    """

    gamma: float
    theta: float
    kappa2: float
    kappa_alpha: float
    alpha: float = 1.0

    def __post_init__(self) -> None:
        _require(self.gamma > 0, f"gamma must be > 0, got {self.gamma}")
        _require(self.theta > 0, f"theta must be > 0, got {self.theta}")
        _require(self.kappa2 > 0, f"kappa2 must be > 0, got {self.kappa2}")
        _require(self.kappa_alpha > 0, f"kappa_alpha must be > 0, got {self.kappa_alpha}")
        _require(self.alpha > 0, f"alpha must be > 0, got {self.alpha}")
        p, q = self.shape_parameters()
        _require(math.isfinite(p) and p > 0, f"derived shape p must be finite and > 0, got {p}")
        _require(math.isfinite(q) and q > 0, f"derived shape q must be finite and > 0, got {q}")

    def shape_parameters(self) -> tuple[float, float]:
        """Return the (p, q) shapes of the stationary GB2 density."""
        p = (self.alpha - 1.0 + 2.0 * self.gamma * self.theta / self.kappa_alpha**2) / self.alpha
        q = (1.0 + 2.0 * self.gamma / self.kappa2**2) / self.alpha
        return p, q

    def scale_parameter(self) -> float:
        """Return the scale beta of the stationary GB2 density."""
        return (self.kappa_alpha / self.kappa2) ** (2.0 / self.alpha)


_FAMILIES = ("gamma", "invgamma", "betaprime", "gb2")


@dataclass(frozen=True)
class SteadyStateDist:
    """Stationary distribution of the variance process.

    ``family`` is one of ``"gamma"``, ``"invgamma"``, ``"betaprime"``,
    ``"gb2"``.  ``beta`` is the scale; ``p`` and ``q`` are shapes (a Gamma
    uses only ``p``, an Inverse Gamma only ``q``); ``alpha`` is the GB2
    exponent and equals 1 for the other families.
    """

    family: str
    beta: float
    p: float | None = None
    q: float | None = None
    alpha: float = 1.0

    def __post_init__(self) -> None:
        _require(self.family in _FAMILIES, f"unknown family {self.family!r}")
        _require(self.beta > 0, f"scale beta must be > 0, got {self.beta}")
        if self.family != "invgamma":
            _require(self.p is not None and self.p > 0, f"shape p must be > 0, got {self.p}")
        if self.family != "gamma":
            _require(self.q is not None and self.q > 0, f"shape q must be > 0, got {self.q}")
        if self.family == "gb2":
            _require(self.alpha > 0, f"alpha must be > 0, got {self.alpha}")
        else:
            _require(self.alpha == 1.0, f"alpha must be 1 for {self.family}, got {self.alpha}")

    # -- density ---------------------------------------------------------

    def logpdf(self, v):
        """Log-density at v (v > 0 elementwise)."""
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise DomainError("density is defined for v > 0 only")
        b = self.beta
        if self.family == "gamma":
            p = self.p
            out = (p - 1.0) * np.log(v) - v / b - special.gammaln(p) - p * math.log(b)
        elif self.family == "invgamma":
            q = self.q
            out = q * math.log(b) - (q + 1.0) * np.log(v) - b / v - special.gammaln(q)
        else:
            p, q, a = self.p, self.q, self.alpha
            logu = a * (np.log(v) - math.log(b))
            out = (
                math.log(a)
                + (p * a - 1.0) * (np.log(v) - math.log(b))
                - (p + q) * np.logaddexp(0.0, logu)
                - math.log(b)
                - special.betaln(p, q)
            )
        return out if out.shape else float(out)

    def pdf(self, v):
        """Density at v (v > 0 elementwise)."""
        return np.exp(self.logpdf(v))

    def cdf(self, v):
        """Cumulative distribution function at v (v > 0 elementwise)."""
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise DomainError("cdf is defined for v > 0 only")
        if self.family == "gamma":
            out = special.gammainc(self.p, v / self.beta)
        elif self.family == "invgamma":
            out = special.gammaincc(self.q, self.beta / v)
        else:
            u = (v / self.beta) ** self.alpha
            out = special.betainc(self.p, self.q, u / (1.0 + u))
        return out if out.shape else float(out)

    # -- moments ---------------------------------------------------------

    def moment_exists(self, n: float) -> bool:
        """Whether the raw moment E[v**n] is finite."""
        a = self.alpha
        if self.family == "gamma":
            return n / a > -self.p
        if self.family == "invgamma":
            return n / a < self.q
        return -self.p < n / a < self.q

    def moment(self, n: float) -> float:
        """Raw moment E[v**n]; raises DivergentMomentError when it does not exist."""
        if not self.moment_exists(n):
            raise DivergentMomentError(
                f"moment of order {n} diverges for {self.family}"
                f"(p={self.p}, q={self.q}, alpha={self.alpha})"
            )
        na = n / self.alpha
        if self.family == "gamma":
            log_m = special.gammaln(self.p + na) - special.gammaln(self.p)
        elif self.family == "invgamma":
            log_m = special.gammaln(self.q - na) - special.gammaln(self.q)
        else:
            log_m = (
                special.gammaln(self.p + na)
                - special.gammaln(self.p)
                + special.gammaln(self.q - na)
                - special.gammaln(self.q)
            )
        return float(np.exp(n * math.log(self.beta) + log_m))

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        m1 = self.moment(1)
        return self.moment(2) - m1 * m1

    # -- sampling --------------------------------------------------------

    def sample(self, rng: np.random.Generator, size=None):
        """Draw stationary samples.

        The Gamma branch uses inverse-CDF sampling; the others use exact
        ratio-of-Gammas representations.
        """
        if self.family == "gamma":
            return stats.gamma.ppf(rng.random(size), self.p, scale=self.beta)
        if self.family == "invgamma":
            return self.beta / rng.gamma(self.q, 1.0, size)
        ratio = rng.gamma(self.p, 1.0, size) / rng.gamma(self.q, 1.0, size)
        return self.beta * ratio ** (1.0 / self.alpha)


def steady_state_of(params) -> SteadyStateDist:
    """Stationary variance distribution implied by a parameter set.

    Raises
    ------
    ParameterError
        If both noise amplitudes vanish (the stationary law is degenerate).
    """
    if isinstance(params, GB2Params):
        p, q = params.shape_parameters()
        return SteadyStateDist(
            family="gb2", beta=params.scale_parameter(), p=p, q=q, alpha=params.alpha
        )
    g, t, km, kh = params.gamma, params.theta, params.kappa_m, params.kappa_h
    if km == 0 and kh == 0:
        raise ParameterError("degenerate stationary law: both noise amplitudes are zero")
    if km == 0:
        return SteadyStateDist(family="gamma", beta=kh**2 / (2.0 * g), p=2.0 * g * t / kh**2)
    if kh == 0:
        return SteadyStateDist(
            family="invgamma", beta=2.0 * g * t / km**2, q=1.0 + 2.0 * g / km**2
        )
    return SteadyStateDist(
        family="betaprime",
        beta=(kh / km) ** 2,
        p=2.0 * g * t / kh**2,
        q=1.0 + 2.0 * g / km**2,
    )


def stationary_variance(params: MeanRevertingParams) -> float:
    """Stationary variance of v: (kappa_m**2 theta**2 + kappa_h**2 theta) / (2 gamma - kappa_m**2).

    Raises
    ------
    DivergentMomentError
        When 2*gamma <= kappa_m**2 (the stationary variance does not exist).
    """
    g, t, km, kh = params.gamma, params.theta, params.kappa_m, params.kappa_h
    denom = 2.0 * g - km**2
    if denom <= 0:
        raise DivergentMomentError(
            f"stationary variance diverges: 2*gamma={2.0 * g} <= kappa_m**2={km**2}"
        )
    return (km**2 * t**2 + kh**2 * t) / denom


def variance_autocorr(params: MeanRevertingParams, tau):
    """Autocorrelation of the variance process: exp(-gamma * tau)."""
    tau = np.asarray(tau, dtype=float)
    out = np.exp(-params.gamma * tau)
    return out if out.shape else float(out)


def reduced_covariance(params: MeanRevertingParams, tau):
    """Reduced autocovariance of v: cov[v_t, v_{t+tau}] / theta**2.

    Equals ``var[v] / theta**2 * exp(-gamma * tau)``; the lag-0 value is the
    squared coefficient of variation of the stationary law.
    """
    amp = stationary_variance(params) / params.theta**2
    tau = np.asarray(tau, dtype=float)
    out = amp * np.exp(-params.gamma * tau)
    return out if out.shape else float(out)


def leverage_amplitude(params: MeanRevertingParams) -> float:
    """Leverage amplitude at unit correlation: <v**1/2 g(v)> / theta**2.

    The leverage function is ``rho * leverage_amplitude(params) * exp(-gamma tau)``.
    Requires ``2*gamma / kappa_m**2 > 1/2`` when proportional noise is present
    (otherwise the 3/2 moment of the stationary law diverges).
    """
    g, t, km, kh = params.gamma, params.theta, params.kappa_m, params.kappa_h
    if km == 0 and kh == 0:
        return 0.0
    if km == 0:
        return kh / t
    ratio = 2.0 * g / km**2
    if ratio <= 0.5:
        raise DivergentMomentError(
            f"leverage amplitude diverges: need 2*gamma/kappa_m**2 > 1/2, got {ratio}"
        )
    if kh == 0:
        log_amp = (
            math.log(km)
            + 0.5 * math.log(ratio)
            + special.gammaln(ratio - 0.5)
            - 0.5 * math.log(t)
            - special.gammaln(ratio)
        )
        return float(np.exp(log_amp))
    p = 2.0 * g * t / kh**2
    q = 1.0 + ratio
    beta = (kh / km) ** 2
    log_amp = (
        math.log(km)
        + 1.5 * math.log(beta)
        + special.betaln(p + 1.0, q - 1.5)
        - special.betaln(p, q)
        - 2.0 * math.log(t)
    )
    return float(np.exp(log_amp))


def leverage_function(params: MeanRevertingParams, tau):
    """Leverage <dx_{t+tau}**2 dx_t> / <dx_t**2>**2 = rho * amplitude * exp(-gamma tau)."""
    amp = params.rho * leverage_amplitude(params)
    tau = np.asarray(tau, dtype=float)
    out = amp * np.exp(-params.gamma * tau)
    return out if out.shape else float(out)
