"""Spectral structure and relaxation experiments for the square-root model.

Spectral side
-------------
With ``a = 2*gamma*theta/kappa_h**2 > 1`` and ``b = a/theta``, the forward
operator ``L P = (kappa**2/2)(x P)'' + gamma((x - theta) P)'`` has the
stationary density ``P0 = Gamma(a, scale=1/b)`` and the discrete spectrum
``lambda_n = n*gamma`` with eigenfunctions ``P_n = P0 * L_n^(a-1)(b x)`` (a
generalized Laguerre polynomial times the stationary density).  Only the
first mode overlaps ``x``, so the mode-sum autocorrelation collapses to a
single exponential.

Relaxation detector
-------------------
Saturation of the expanding-window Kolmogorov-Smirnov statistic is detected
against a calibration floor rather than against the trajectory's own minimum
(the running minimum keeps drifting down at finite sample size, which pins a
naive threshold rule to the end of the horizon).  All detector knobs are
expressed in units of the relaxation scale ``1/gamma``:

* horizon 50 e-folds, checkpoints every 0.1 e-folds starting at 1 e-fold;
* floor: per-checkpoint 0.23-quantile of the KS statistic over calibration
  paths started in the steady state, smoothed by a trailing mean;
* crossing: KS at or below ``(1 + eps)`` times the floor, sustained for 0.8
  e-folds of consecutive checkpoints.

Samples that never cross are flagged ``"no saturation"``; crossings in the
last 5% of the horizon are flagged ``"late saturation"``; paths whose
probability-integral transform carries no dispersion are flagged
``"degenerate trajectory"``.  Flagged samples are excluded from fits.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy import special

from .errors import DomainError, ExperimentError, FitError, ParameterError
from .fitting import MleReport, rank_families
from .models import MeanRevertingParams, SteadyStateDist, steady_state_of
from .simulate import SimConfig, simulate_variance_path

__all__ = [
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
    "empirical_cumulants",
    "ks_curve",
    "measure_relaxation_time",
    "relaxation_experiment",
]

# calibration paths draw from seeds offset by this amount; sample counts must
# stay below it so the two seed ranges cannot collide
_CAL_SEED_OFFSET = 1_000_000


# -- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class HestonUnitParams:
    """Square-root variance model rescaled to unit mean.

    ``kappa2`` is the squared noise amplitude of the reduced model; a model
    with mean ``theta`` maps to ``kappa2 = kappa_h**2 / theta``.
    """

    gamma: float
    kappa2: float

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")
        if not self.kappa2 > 0:
            raise ParameterError(f"kappa2 must be > 0, got {self.kappa2}")
        if not 2.0 * self.gamma / self.kappa2 > 1.0:
            raise ParameterError(
                "origin condition violated: need 2*gamma/kappa2 > 1, got "
                f"{2.0 * self.gamma / self.kappa2:.4g}"
            )

    @property
    def a(self) -> float:
        """Shape of the stationary Gamma law (and inverse of its variance)."""
        return 2.0 * self.gamma / self.kappa2

    def to_heston(self) -> MeanRevertingParams:
        return MeanRevertingParams(
            gamma=self.gamma, theta=1.0, kappa_h=math.sqrt(self.kappa2)
        )

    @classmethod
    def from_heston(cls, params: MeanRevertingParams) -> "HestonUnitParams":
        if params.kappa_m != 0.0:
            raise ParameterError(
                "spectral analysis covers the square-root branch only (kappa_m = 0)"
            )
        return cls(gamma=params.gamma, kappa2=params.kappa_h**2 / params.theta)


@dataclass(frozen=True)
class EigenMode:
    """One decay mode of the forward operator."""

    n: int
    lam: float
    normalized: bool = True

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ParameterError(f"mode index must be a positive integer, got {self.n}")
        if not self.lam > 0:
            raise ParameterError(f"eigenvalue must be > 0, got {self.lam}")


@dataclass(frozen=True, eq=False)
class CumulantCurve:
    """Theory and ensemble cumulants of one order on a common time grid."""

    order: int
    times: np.ndarray
    theory: np.ndarray
    empirical: np.ndarray
    se: np.ndarray
    x0: int

    def __post_init__(self) -> None:
        if self.order not in (1, 2, 3):
            raise ParameterError(f"order must be 1, 2 or 3, got {self.order}")
        if self.x0 not in (0, 1):
            raise ParameterError(f"x0 must be 0 or 1, got {self.x0}")
        n = len(self.times)
        if not (len(self.theory) == len(self.empirical) == len(self.se) == n):
            raise ParameterError("times, theory, empirical and se lengths differ")


@dataclass(frozen=True)
class RelaxationSample:
    """Relaxation time of one path, or the reason it was excluded."""

    time: float
    seed: int
    ks_min: float
    ks_at_time: float
    ks_final: float
    n_checkpoints: int
    flag: str = ""

    def __post_init__(self) -> None:
        if self.flag == "":
            if not (math.isfinite(self.time) and self.time > 0):
                raise ParameterError(f"relaxation time must be > 0, got {self.time}")
        elif not math.isnan(self.time):
            raise ParameterError("flagged samples carry no relaxation time")


@dataclass(frozen=True)
class RelaxationConfig:
    """Detector knobs; time-like quantities are in units of ``1/gamma``."""

    horizon_efolds: float = 50.0
    checkpoint_efolds: float = 0.1
    start_efolds: float = 1.0
    persistence_efolds: float = 0.8
    floor_quantile: float = 0.23
    smooth_frac: float = 0.15
    eps: float = 0.05
    n_calibration: int = 1024
    late_fraction: float = 0.95
    seed: int = 0
    calibration_seed: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ("horizon_efolds", "checkpoint_efolds", "start_efolds", "persistence_efolds"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 < self.floor_quantile < 1.0:
            raise ParameterError(f"floor_quantile must be in (0, 1), got {self.floor_quantile}")
        if not 0.0 < self.smooth_frac <= 1.0:
            raise ParameterError(f"smooth_frac must be in (0, 1], got {self.smooth_frac}")
        if not self.eps >= 0.0:
            raise ParameterError(f"eps must be >= 0, got {self.eps}")
        if not isinstance(self.n_calibration, (int, np.integer)) or self.n_calibration < 16:
            raise ParameterError(f"n_calibration must be an integer >= 16, got {self.n_calibration}")
        if not 0.0 < self.late_fraction <= 1.0:
            raise ParameterError(f"late_fraction must be in (0, 1], got {self.late_fraction}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ParameterError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.calibration_seed is not None and (
            not isinstance(self.calibration_seed, (int, np.integer)) or self.calibration_seed < 0
        ):
            raise ParameterError(f"calibration_seed must be a nonnegative integer, got {self.calibration_seed}")
        if not isinstance(self.workers, (int, np.integer)) or self.workers < 1:
            raise ParameterError(f"workers must be a positive integer, got {self.workers}")


@dataclass(frozen=True, eq=False)
class RelaxationResult:
    """Relaxation-time measurement at one parameter point."""

    params: HestonUnitParams
    samples: tuple[RelaxationSample, ...]
    times: np.ndarray  # kept (unflagged) relaxation times, days
    horizon: int
    n_flagged: int
    flag_counts: dict[str, int]
    fits: tuple[MleReport, ...]
    unreliable: bool

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def flagged_fraction(self) -> float:
        return self.n_flagged / len(self.samples)

    def best_fit(self) -> MleReport:
        if not self.fits:
            raise ExperimentError("no family fits available (too few kept samples)")
        return self.fits[0]


@dataclass(frozen=True, eq=False)
class RelaxationStudy:
    """Results over a parameter grid plus cross-grid rate scaling."""

    results: tuple[RelaxationResult, ...]
    slopes: dict[str, float] | None
    config: RelaxationConfig

    def scaling_table(self) -> list[dict]:
        rows = []
        for res in self.results:
            t = res.times
            row = {
                "gamma": res.params.gamma,
                "kappa2": res.params.kappa2,
                "n_kept": int(t.size),
                "n_flagged": res.n_flagged,
                "mean": float(t.mean()) if t.size else math.nan,
                "variance": float(t.var(ddof=1)) if t.size > 1 else math.nan,
                "k3": _kstat(t, 3) if t.size > 2 else math.nan,
                "best_family": res.fits[0].family if res.fits else None,
                "best_ks": res.fits[0].ks if res.fits else math.nan,
            }
            rows.append(row)
        return rows


# -- parameter coercion ---------------------------------------------------------


def _unit_of(params) -> HestonUnitParams:
    if isinstance(params, HestonUnitParams):
        return params
    if isinstance(params, MeanRevertingParams):
        return HestonUnitParams.from_heston(params)
    raise ParameterError(f"unsupported parameter type {type(params).__name__}")


def _shape_scale(params) -> tuple[float, float, float]:
    """(a, theta, gamma) of the square-root model behind ``params``."""
    if isinstance(params, HestonUnitParams):
        return params.a, 1.0, params.gamma
    unit = _unit_of(params)
    return unit.a, params.theta, params.gamma


# -- eigenfunctions -------------------------------------------------------------


def _log_p0(a: float, b: float, x: np.ndarray) -> np.ndarray:
    return a * math.log(b) + (a - 1.0) * np.log(x) - b * x - special.gammaln(a)


def eigenfunction_eval(params, n: int, x, normalized: bool = True):
    """Evaluate the n-th forward-operator eigenfunction at x > 0.

    The quantized eigenvalue ``lambda_n = n*gamma`` reduces the confluent
    hypergeometric factor to the generalized Laguerre polynomial
    ``L_n^(a-1)(b x)``.  With ``normalized=True`` the result satisfies
    ``integral(P_n**2 / P0) = 1`` and carries the sign that makes the n=1
    mode proportional to ``(x - theta)``.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"mode index must be a positive integer, got {n}")
    a, theta, _ = _shape_scale(params)
    b = a / theta
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise DomainError("eigenfunctions are defined for x > 0 only")
    p0 = np.exp(_log_p0(a, b, xa))
    val = p0 * special.eval_genlaguerre(n, a - 1.0, b * xa)
    if normalized:
        log_c = 0.5 * (special.gammaln(n + 1.0) + special.gammaln(a) - special.gammaln(n + a))
        val = val * ((-1.0) ** n * math.exp(log_c))
    return val if val.shape else float(val)


def eigenfunction_p1(params, x):
    """Normalized first eigenfunction in closed form: sqrt(a) P0 (x/theta - 1)."""
    a, theta, _ = _shape_scale(params)
    b = a / theta
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise DomainError("eigenfunctions are defined for x > 0 only")
    val = math.sqrt(a) * np.exp(_log_p0(a, b, xa)) * (xa / theta - 1.0)
    return val if val.shape else float(val)


def eigenmode(params, n: int) -> EigenMode:
    """Mode index and eigenvalue ``lambda_n = n*gamma``."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"mode index must be a positive integer, got {n}")
    _, _, gamma = _shape_scale(params)
    return EigenMode(n=int(n), lam=n * gamma)


def g_coefficient(params, n: int) -> float:
    """Overlap of x with the n-th normalized mode.

    Only the first mode couples to x: ``g_1 = sqrt(theta * kappa**2 / (2 gamma))``
    and ``g_n = 0`` exactly for n >= 2.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"mode index must be a positive integer, got {n}")
    a, theta, _ = _shape_scale(params)
    if n == 1:
        return theta / math.sqrt(a)
    return 0.0


def ode_residual(params, lam: float, x, values=None, n: int | None = None) -> float:
    """Finite-difference residual of the eigenvalue equation on a uniform grid.

    Computes ``(kappa**2/2)(x P)'' + gamma((x - theta) P)' + lam P`` with
    fourth-order central stencils and returns ``max|residual|`` normalized by
    ``gamma * max|P|``.  The trial function is ``values`` if given, else mode
    ``n`` (``n=0`` selects the stationary density).
    """
    a, theta, gamma = _shape_scale(params)
    kappa2 = 2.0 * gamma * theta / a
    xa = np.asarray(x, dtype=float)
    if xa.ndim != 1 or xa.size < 54:
        raise ParameterError(
            f"grid too coarse: need at least 50 interior points, got {max(xa.size - 4, 0)}"
        )
    if np.any(xa <= 0):
        raise DomainError("grid must satisfy x > 0")
    h = float(xa[1] - xa[0])
    if h <= 0 or not np.allclose(np.diff(xa), h, rtol=1e-8, atol=0.0):
        raise ParameterError("grid must be uniformly spaced and increasing")
    if values is not None:
        p = np.asarray(values, dtype=float)
        if p.shape != xa.shape:
            raise ParameterError("trial function length must match the grid")
    elif n is None:
        raise ParameterError("provide a trial function via values= or a mode index via n=")
    elif n == 0:
        p = np.exp(_log_p0(a, a / theta, xa))
    else:
        p = eigenfunction_eval(params, n, xa)
    scale = float(np.max(np.abs(p)))
    if scale == 0.0:
        raise DomainError("trial function vanishes on the grid")

    flux2 = xa * p
    flux1 = (xa - theta) * p
    d2 = (
        -flux2[:-4] + 16.0 * flux2[1:-3] - 30.0 * flux2[2:-2] + 16.0 * flux2[3:-1] - flux2[4:]
    ) / (12.0 * h * h)
    d1 = (flux1[:-4] - 8.0 * flux1[1:-3] + 8.0 * flux1[3:-1] - flux1[4:]) / (12.0 * h)
    resid = 0.5 * kappa2 * d2 + gamma * d1 + lam * p[2:-2]
    return float(np.max(np.abs(resid)) / (gamma * scale))


# -- cumulant relaxation ----------------------------------------------------------


def theory_cumulant(n: int, t, x0: int, params):
    """Closed-form n-th cumulant of the square-root process at time t.

    ``x0=0`` starts the process at the origin, ``x0=1`` at the mean.  With
    ``q = exp(-gamma t)`` and ``a = 2 gamma theta / kappa**2``:

    ``kappa_n(t) = theta**n (n-1)! / a**(n-1) * (1-q)**(n-1) * f``,
    ``f = (1-q)`` when x0=0 and ``f = 1 + (n-1) q`` when x0=1.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"cumulant order must be a positive integer, got {n}")
    if x0 not in (0, 1):
        raise ParameterError(f"x0 must be 0 (origin start) or 1 (mean start), got {x0}")
    a, theta, gamma = _shape_scale(params)
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0):
        raise DomainError("time must be >= 0")
    q = np.exp(-gamma * ta)
    base = theta**n * math.factorial(n - 1) / a ** (n - 1) * (1.0 - q) ** (n - 1)
    out = base * (1.0 - q) if x0 == 0 else base * (1.0 + (n - 1) * q)
    return out if out.shape else float(out)


def _kstat(values: np.ndarray, order: int) -> float:
    """Bias-corrected k-statistic of order 1..3."""
    n = values.size
    if order == 1:
        return float(values.mean())
    d = values - values.mean()
    if order == 2:
        return float(np.sum(d * d) / (n - 1))
    return float(np.mean(d**3) * n * n / ((n - 1) * (n - 2)))


def _kstat_columns(block: np.ndarray, order: int) -> np.ndarray:
    n = block.shape[0]
    if order == 1:
        return block.mean(axis=0)
    d = block - block.mean(axis=0)
    if order == 2:
        return np.sum(d * d, axis=0) / (n - 1)
    return np.mean(d**3, axis=0) * n * n / ((n - 1) * (n - 2))


def empirical_cumulants(ensemble, orders: Sequence[int] = (1, 2, 3), times=None,
                        n_boot: int = 200) -> tuple[CumulantCurve, ...]:
    """Cross-sectional cumulants of an ensemble against the closed forms.

    The ensemble must start at the origin (``x0=0``) or at the mean
    (``x0=theta``); k-statistics correct the small-ensemble bias of orders 2
    and 3 and bootstrap resampling over paths supplies standard errors.
    """
    vals = ensemble.values
    if vals.shape[0] < 100:
        raise ParameterError(
            f"need at least 100 paths for cumulant curves, got {vals.shape[0]}"
        )
    for n in orders:
        if n not in (1, 2, 3):
            raise ParameterError(f"orders must be drawn from (1, 2, 3), got {n}")
    if not isinstance(n_boot, (int, np.integer)) or n_boot < 0:
        raise ParameterError(f"n_boot must be a nonnegative integer, got {n_boot}")
    cfg = ensemble.config
    if cfg.x0 == 0:
        x0 = 0
    elif cfg.x0 == ensemble.params.theta:
        x0 = 1
    else:
        raise ParameterError(
            'cumulant curves require x0=0 or x0=theta, got '
            f"{cfg.x0!r} with theta={ensemble.params.theta}"
        )
    grid = ensemble.times if times is None else np.asarray(times, dtype=float)
    idx = np.rint(grid / cfg.dt).astype(int)
    if np.any(np.abs(idx * cfg.dt - grid) > 1e-9 * max(cfg.dt, 1.0)):
        raise ParameterError("times must lie on the reporting grid")
    if np.any(idx < 0) or np.any(idx >= cfg.steps):
        raise ParameterError("times fall outside the simulated horizon")

    block = vals[:, idx]
    n_paths = block.shape[0]
    emp = {n: _kstat_columns(block, n) for n in orders}
    se = {n: np.zeros(grid.size) for n in orders}
    if n_boot > 0:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0x626F6F74,)))
        boots = {n: np.empty((n_boot, grid.size)) for n in orders}
        for b in range(n_boot):
            sel = rng.integers(0, n_paths, n_paths)
            resampled = block[sel]
            for n in orders:
                boots[n][b] = _kstat_columns(resampled, n)
        se = {n: boots[n].std(axis=0, ddof=1) for n in orders}

    curves = []
    for n in orders:
        theory = theory_cumulant(n, grid, x0, ensemble.params)
        curves.append(
            CumulantCurve(
                order=int(n),
                times=grid.copy(),
                theory=np.asarray(theory, dtype=float),
                empirical=emp[n],
                se=se[n],
                x0=x0,
            )
        )
    return tuple(curves)


# -- KS saturation detector --------------------------------------------------------


@njit(cache=True, nogil=True)
def _ks_expanding(u, chk, full, out):
    """Expanding-window KS of u against Uniform(0,1).

    Maintains the sorted prefix by insertion; scans the statistic either at
    every prefix (``full``) or only at the 1-based lengths in ``chk``.
    """
    n = u.shape[0]
    buf = np.empty(n)
    m = 0
    ci = 0
    for t in range(n):
        x = u[t]
        lo, hi = 0, m
        while lo < hi:
            mid = (lo + hi) // 2
            if buf[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        for j in range(m, lo, -1):
            buf[j] = buf[j - 1]
        buf[lo] = x
        m += 1
        want = full
        if not want and ci < chk.shape[0] and t + 1 == chk[ci]:
            want = True
        if want:
            d = 0.0
            inv = 1.0 / m
            for i in range(m):
                hi_d = (i + 1) * inv - buf[i]
                lo_d = buf[i] - i * inv
                if hi_d > d:
                    d = hi_d
                if lo_d > d:
                    d = lo_d
            if full:
                out[t] = d
            else:
                out[ci] = d
                ci += 1


def _pit(steady: SteadyStateDist, values: np.ndarray) -> np.ndarray:
    # truncated Euler paths may report exact zeros; F(0+) = 0 for every
    # supported family
    u = np.zeros(values.shape, dtype=float)
    mask = values > 0
    if mask.any():
        u[mask] = steady.cdf(values[mask])
    return u


def ks_curve(values, steady: SteadyStateDist) -> np.ndarray:
    """Expanding-window KS of a series against a stationary law, per sample."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ParameterError("values must be a non-empty one-dimensional array")
    u = _pit(steady, v)
    if not np.all(np.isfinite(u)):
        raise DomainError("probability integral transform produced non-finite values")
    out = np.empty(v.size)
    _ks_expanding(u, np.empty(0, dtype=np.int64), True, out)
    return out


def _grid_spec(gamma: float, cfg: RelaxationConfig) -> tuple[int, np.ndarray, int]:
    horizon = int(round(cfg.horizon_efolds / gamma))
    dt_chk = max(1, int(round(cfg.checkpoint_efolds / gamma)))
    t_min = max(1, int(round(cfg.start_efolds / gamma)))
    k = max(1, int(round(cfg.persistence_efolds / (gamma * dt_chk))))
    chk = np.arange(t_min, horizon + 1, dt_chk, dtype=np.int64)
    if chk.size < k + 1:
        raise ParameterError(
            f"horizon of {horizon} days leaves only {chk.size} checkpoints; "
            f"persistence needs more than {k}"
        )
    return horizon, chk, k


def _ks_rows(heston, steady, horizon, chk, seed_base, n, x0, workers):
    """Checkpoint KS values for n paths; rows of NaN mark degenerate PITs."""
    out = np.empty((n, chk.size))
    bad = np.zeros(n, dtype=bool)

    def run(i: int) -> None:
        sim = SimConfig(steps=horizon + 1, dt=1.0, x0=x0, seed=seed_base + i)
        v = simulate_variance_path(heston, sim).values[1:]
        u = _pit(steady, v)
        if not np.all(np.isfinite(u)) or np.ptp(u) < 1e-9:
            bad[i] = True
            out[i] = np.nan
            return
        _ks_expanding(u, chk, False, out[i])

    if workers == 1 or n == 1:
        for i in range(n):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(n)))
    return out, bad


def _trailing_mean(f: np.ndarray, frac: float) -> np.ndarray:
    out = np.empty_like(f)
    for i in range(f.size):
        w = max(1, int(frac * (i + 1)))
        out[i] = f[max(0, i - w + 1) : i + 1].mean()
    return out


_FLOOR_CACHE: dict = {}


def _floor_curve(unit, steady, cfg, horizon, chk, workers) -> np.ndarray:
    cal_seed = (
        cfg.seed + _CAL_SEED_OFFSET if cfg.calibration_seed is None else cfg.calibration_seed
    )
    key = (
        unit,
        steady,
        cal_seed,
        cfg.n_calibration,
        cfg.floor_quantile,
        cfg.smooth_frac,
        horizon,
        chk.tobytes(),
    )
    hit = _FLOOR_CACHE.get(key)
    if hit is not None:
        return hit
    rows, bad = _ks_rows(
        unit.to_heston(), steady, horizon, chk, cal_seed, cfg.n_calibration, "steady", workers
    )
    good = rows[~bad]
    if good.shape[0] < cfg.n_calibration // 2:
        raise ExperimentError(
            "calibration paths are degenerate; the steady law carries no dispersion"
        )
    floor = _trailing_mean(np.quantile(good, cfg.floor_quantile, axis=0), cfg.smooth_frac)
    if len(_FLOOR_CACHE) > 32:
        _FLOOR_CACHE.clear()
    _FLOOR_CACHE[key] = floor
    return floor


def _persistent_first(hit: np.ndarray, k: int) -> np.ndarray:
    """Per row, first column index opening k consecutive True values, else -1."""
    run = np.zeros(hit.shape[0], dtype=np.int64)
    out = np.full(hit.shape[0], -1, dtype=np.int64)
    for j in range(hit.shape[1]):
        run = np.where(hit[:, j], run + 1, 0)
        new = (run == k) & (out < 0)
        out[new] = j - k + 1
    return out


def _detect(rows, bad, chk, k, horizon, cfg, floor, seed_base):
    level = None if floor is None else (1.0 + cfg.eps) * floor
    if level is not None:
        first = _persistent_first(rows <= level[None, :], k)
    else:
        first = np.full(rows.shape[0], -1, dtype=np.int64)
    samples = []
    for i in range(rows.shape[0]):
        row = rows[i]
        ks_min = float(np.nanmin(row)) if not bad[i] else math.nan
        ks_final = float(row[-1]) if not bad[i] else math.nan
        if bad[i]:
            flag, time, ks_at = "degenerate trajectory", math.nan, math.nan
        elif first[i] < 0:
            flag, time, ks_at = "no saturation", math.nan, math.nan
        else:
            t = float(chk[first[i]])
            ks_at = float(row[first[i]])
            if t > cfg.late_fraction * horizon:
                flag, time = "late saturation", math.nan
            else:
                flag, time = "", t
        samples.append(
            RelaxationSample(
                time=time,
                seed=seed_base + i,
                ks_min=ks_min,
                ks_at_time=ks_at,
                ks_final=ks_final,
                n_checkpoints=int(chk.size),
                flag=flag,
            )
        )
    return samples


def measure_relaxation_time(params, config: RelaxationConfig | None = None,
                            steady: SteadyStateDist | None = None) -> RelaxationSample:
    """Relaxation time of a single path started at the mean.

    The path's expanding-window KS statistic against ``steady`` (by default
    the model's own stationary law) is compared with the calibration floor;
    see the module docstring for the crossing rule and flags.
    """
    unit = _unit_of(params)
    cfg = config if config is not None else RelaxationConfig()
    st = steady if steady is not None else steady_state_of(unit.to_heston())
    horizon, chk, k = _grid_spec(unit.gamma, cfg)
    rows, bad = _ks_rows(unit.to_heston(), st, horizon, chk, cfg.seed, 1, 1.0, 1)
    # skip the (expensive) floor when the path itself carries no information
    floor = None
    if not bad[0]:
        floor = _floor_curve(unit, st, cfg, horizon, chk, cfg.workers)
    return _detect(rows, bad, chk, k, horizon, cfg, floor, cfg.seed)[0]


def relaxation_experiment(params_grid, n_samples: int,
                          config: RelaxationConfig | None = None) -> RelaxationStudy:
    """Relaxation-time distribution over a parameter grid.

    Per grid point: ``n_samples`` independent relaxation times (per-sample
    seeds ``config.seed + i``), the six-family MLE ranking of the kept times,
    and an unreliable mark when flagged samples exceed 5%.  With three or
    more distinct rates in the grid the study also reports log-log slopes of
    the mean, variance and third cumulant of the relaxation time against
    gamma.
    """
    cfg = config if config is not None else RelaxationConfig()
    if not isinstance(n_samples, (int, np.integer)) or n_samples < 100:
        raise ParameterError(f"need at least 100 samples per grid point, got {n_samples}")
    if n_samples >= _CAL_SEED_OFFSET:
        raise ParameterError(
            f"n_samples must stay below {_CAL_SEED_OFFSET} to keep sample and "
            "calibration seed ranges disjoint"
        )
    if isinstance(params_grid, (HestonUnitParams, MeanRevertingParams)):
        params_grid = [params_grid]
    units = [_unit_of(p) for p in params_grid]
    if not units:
        raise ParameterError("parameter grid is empty")

    results = []
    for unit in units:
        heston = unit.to_heston()
        st = steady_state_of(heston)
        horizon, chk, k = _grid_spec(unit.gamma, cfg)
        rows, bad = _ks_rows(heston, st, horizon, chk, cfg.seed, n_samples, 1.0, cfg.workers)
        floor = None
        if not bad.all():
            floor = _floor_curve(unit, st, cfg, horizon, chk, cfg.workers)
        samples = _detect(rows, bad, chk, k, horizon, cfg, floor, cfg.seed)
        times = np.array([s.time for s in samples if s.flag == ""], dtype=float)
        flag_counts = Counter(s.flag for s in samples if s.flag != "")
        n_flagged = sum(flag_counts.values())
        fits: tuple[MleReport, ...] = ()
        if times.size >= 10:
            try:
                fits = tuple(rank_families(times))
            except FitError:
                pass
        unreliable = n_flagged > 0.05 * n_samples or not fits
        results.append(
            RelaxationResult(
                params=unit,
                samples=tuple(samples),
                times=times,
                horizon=horizon,
                n_flagged=n_flagged,
                flag_counts=dict(flag_counts),
                fits=fits,
                unreliable=unreliable,
            )
        )
    return RelaxationStudy(
        results=tuple(results), slopes=_scaling_slopes(results), config=cfg
    )


def _scaling_slopes(results) -> dict[str, float] | None:
    by_kappa2: dict[float, list[RelaxationResult]] = {}
    for res in results:
        if res.times.size > 2:
            by_kappa2.setdefault(res.params.kappa2, []).append(res)
    if not by_kappa2:
        return None
    group = max(by_kappa2.values(), key=lambda g: len({r.params.gamma for r in g}))
    gammas = np.array([r.params.gamma for r in group])
    if np.unique(gammas).size < 3:
        return None
    means = np.array([r.times.mean() for r in group])
    varis = np.array([r.times.var(ddof=1) for r in group])
    k3s = np.array([_kstat(r.times, 3) for r in group])
    lg = np.log(gammas)
    slopes = {
        "mean": float(np.polyfit(lg, np.log(means), 1)[0]),
        "variance": float(np.polyfit(lg, np.log(varis), 1)[0]),
    }
    if np.all(k3s > 0):
        slopes["k3"] = float(np.polyfit(lg, np.log(k3s), 1)[0])
    return slopes
