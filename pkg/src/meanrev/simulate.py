"""Euler simulation of the variance SDE and of joint return/variance paths.

Scheme
------
Full-truncation Euler: drift and diffusion are evaluated at ``max(v, 0)``
while the untruncated state is advanced, and reported values are clamped at
zero.  Each reported step of ``dt`` days is integrated with ``substeps``
inner steps; by default ``substeps`` is chosen so that
``gamma * dt / substeps <= 0.01``.

Reproducibility
---------------
Path ``i`` of an ensemble draws from the dedicated stream
``SeedSequence(seed, spawn_key=(i,))``, so results are bit-identical for any
worker count, batch size, or path order, and a single-path run equals path 0
of an ensemble with the same seed.  Per path the draw order is fixed: the
optional stationary initial value first, then one standard normal per inner
step (two per inner step for joint paths, return noise first).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ParameterError
from .models import GB2Params, MeanRevertingParams, steady_state_of

__all__ = [
    "SimConfig",
    "VariancePath",
    "JointPath",
    "Ensemble",
    "resolve_substeps",
    "simulate_variance_path",
    "simulate_joint_path",
    "simulate_ensemble",
]

_SCHEMES = ("euler-full-truncation",)

# upper bound on standard-normal draws held in memory at once
_CHUNK_DRAWS = 4_000_000


@dataclass(frozen=True)
class SimConfig:
    """Simulation grid and reproducibility settings.

    Parameters
    ----------
    steps : int
        Number of reported values; reported times are ``0, dt, ..., (steps-1)*dt``.
    dt : float
        Reporting interval in days.
    substeps : int or None
        Inner Euler steps per reported step.  ``None`` selects the smallest
        count with ``gamma * dt / substeps <= 0.01``.
    x0 : float or "steady"
        Initial variance, or ``"steady"`` to draw it from the stationary law.
    seed : int
        Master seed for the per-path stream family.
    scheme : str
        Discretization scheme; only ``"euler-full-truncation"``.
    """

    steps: int
    dt: float = 1.0
    substeps: int | None = None
    x0: float | str = "steady"
    seed: int = 0
    scheme: str = "euler-full-truncation"

    def __post_init__(self) -> None:
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 1:
            raise ParameterError(f"steps must be a positive integer, got {self.steps}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.substeps is not None and (
            not isinstance(self.substeps, (int, np.integer)) or self.substeps < 1
        ):
            raise ParameterError(f"substeps must be a positive integer, got {self.substeps}")
        if isinstance(self.x0, str):
            if self.x0 != "steady":
                raise ParameterError(f'x0 must be a number >= 0 or "steady", got {self.x0!r}')
        elif not (isinstance(self.x0, (int, float, np.floating)) and self.x0 >= 0):
            raise ParameterError(f'x0 must be a number >= 0 or "steady", got {self.x0}')
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ParameterError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.scheme not in _SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}; choose from {_SCHEMES}")


@dataclass(frozen=True, eq=False)
class VariancePath:
    """A simulated variance path sampled every ``config.dt`` days."""

    values: np.ndarray
    params: MeanRevertingParams
    config: SimConfig
    substeps: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.config.steps) * self.config.dt


@dataclass(frozen=True, eq=False)
class JointPath:
    """A joint simulation: variance at the start of each day plus the return
    accumulated during that day."""

    variance: np.ndarray
    returns: np.ndarray
    params: MeanRevertingParams
    config: SimConfig
    substeps: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.config.steps) * self.config.dt


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A batch of paths simulated from per-path substreams of one seed."""

    values: np.ndarray  # (n_paths, steps) variance samples
    returns: np.ndarray | None
    params: MeanRevertingParams
    config: SimConfig
    substeps: int

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.config.steps) * self.config.dt


def resolve_substeps(params, config: SimConfig) -> int:
    """Inner step count actually used for this parameter set."""
    if config.substeps is not None:
        n = int(config.substeps)
        if params.gamma * config.dt / n >= 0.1:
            warnings.warn(
                f"coarse integration: gamma*dt/substeps = {params.gamma * config.dt / n:.3g} "
                ">= 0.1; results may be biased",
                UserWarning,
                stacklevel=2,
            )
        return n
    return max(1, math.ceil(100.0 * params.gamma * config.dt))


@njit(cache=True, nogil=True)
def _euler_variance_chunk(w, gamma, theta, km2, kh2, h, substeps, noise, out):
    sqh = math.sqrt(h)
    idx = 0
    for k in range(out.shape[0]):
        for _ in range(substeps):
            vp = w if w > 0.0 else 0.0
            w = w + gamma * (theta - vp) * h
            w = w + math.sqrt(km2 * vp * vp + kh2 * vp) * sqh * noise[idx]
            idx += 1
        out[k] = w if w > 0.0 else 0.0
    return w


@njit(cache=True, nogil=True)
def _euler_joint_chunk(w, gamma, theta, km2, kh2, rho, h, substeps, noise, out_v, out_r):
    sqh = math.sqrt(h)
    mix = math.sqrt(1.0 - rho * rho)
    idx = 0
    for k in range(out_v.shape[0]):
        out_v[k] = w if w > 0.0 else 0.0
        acc = 0.0
        for _ in range(substeps):
            u = noise[idx, 0]
            z = noise[idx, 1]
            idx += 1
            vp = w if w > 0.0 else 0.0
            acc = acc + math.sqrt(vp) * sqh * u
            w = w + gamma * (theta - vp) * h
            w = w + math.sqrt(km2 * vp * vp + kh2 * vp) * sqh * (rho * u + mix * z)
        out_r[k] = acc
    return w


def _path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_index,)))


def _initial_value(params, config: SimConfig, rng: np.random.Generator) -> float:
    if config.x0 == "steady":
        return float(steady_state_of(params).sample(rng))
    return float(config.x0)


def _check_params(params) -> None:
    if not isinstance(params, MeanRevertingParams):
        if isinstance(params, GB2Params):
            raise ParameterError(
                "simulation supports the alpha=1 model only; "
                "build MeanRevertingParams instead"
            )
        raise ParameterError(f"unsupported parameter type {type(params).__name__}")


def _run_variance(params, config, substeps, rng) -> np.ndarray:
    w = _initial_value(params, config, rng)
    out = np.empty(config.steps)
    out[0] = w
    h = config.dt / substeps
    km2, kh2 = params.kappa_m**2, params.kappa_h**2
    days_per_chunk = max(1, _CHUNK_DRAWS // substeps)
    day = 1
    while day < config.steps:
        nd = min(days_per_chunk, config.steps - day)
        noise = rng.standard_normal(nd * substeps)
        w = _euler_variance_chunk(
            w, params.gamma, params.theta, km2, kh2, h, substeps, noise, out[day : day + nd]
        )
        day += nd
    return out


def _run_joint(params, config, substeps, rng) -> tuple[np.ndarray, np.ndarray]:
    w = _initial_value(params, config, rng)
    out_v = np.empty(config.steps)
    out_r = np.empty(config.steps)
    h = config.dt / substeps
    km2, kh2 = params.kappa_m**2, params.kappa_h**2
    days_per_chunk = max(1, (_CHUNK_DRAWS // 2) // substeps)
    day = 0
    while day < config.steps:
        nd = min(days_per_chunk, config.steps - day)
        noise = rng.standard_normal((nd * substeps, 2))
        w = _euler_joint_chunk(
            w,
            params.gamma,
            params.theta,
            km2,
            kh2,
            params.rho,
            h,
            substeps,
            noise,
            out_v[day : day + nd],
            out_r[day : day + nd],
        )
        day += nd
    return out_v, out_r


def simulate_variance_path(params: MeanRevertingParams, config: SimConfig) -> VariancePath:
    """Simulate the variance SDE alone; ``values[k]`` is v at time ``k*dt``."""
    _check_params(params)
    substeps = resolve_substeps(params, config)
    values = _run_variance(params, config, substeps, _path_rng(config.seed, 0))
    return VariancePath(values=values, params=params, config=config, substeps=substeps)


def simulate_joint_path(params: MeanRevertingParams, config: SimConfig) -> JointPath:
    """Simulate returns and variance together.

    ``variance[k]`` is v at the start of day k; ``returns[k]`` is the log
    return accumulated during day k.
    """
    _check_params(params)
    substeps = resolve_substeps(params, config)
    variance, returns = _run_joint(params, config, substeps, _path_rng(config.seed, 0))
    return JointPath(
        variance=variance, returns=returns, params=params, config=config, substeps=substeps
    )


def simulate_ensemble(
    params: MeanRevertingParams,
    config: SimConfig,
    n_paths: int,
    kind: str = "variance",
    workers: int = 1,
) -> Ensemble:
    """Simulate ``n_paths`` independent paths.

    ``kind`` is ``"variance"`` or ``"joint"``.  ``workers`` only controls
    threading; the output is bit-identical for any worker count because each
    path owns a seed-derived substream.
    """
    _check_params(params)
    if not isinstance(n_paths, (int, np.integer)) or n_paths < 1:
        raise ParameterError(f"n_paths must be a positive integer, got {n_paths}")
    if kind not in ("variance", "joint"):
        raise ParameterError(f'kind must be "variance" or "joint", got {kind!r}')
    if not isinstance(workers, (int, np.integer)) or workers < 1:
        raise ParameterError(f"workers must be a positive integer, got {workers}")
    substeps = resolve_substeps(params, config)
    values = np.empty((n_paths, config.steps))
    returns = np.empty((n_paths, config.steps)) if kind == "joint" else None

    def run(i: int) -> None:
        rng = _path_rng(config.seed, i)
        if kind == "variance":
            values[i] = _run_variance(params, config, substeps, rng)
        else:
            values[i], returns[i] = _run_joint(params, config, substeps, rng)

    if workers == 1:
        for i in range(n_paths):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(n_paths)))
    return Ensemble(
        values=values, returns=returns, params=params, config=config, substeps=substeps
    )
