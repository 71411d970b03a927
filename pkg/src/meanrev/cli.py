"""Command-line interface.

Subcommands: ``simulate``, ``calibrate``, ``corr``, ``leverage``,
``gamma1``, ``relax`` and ``replay``.  Option precedence is flags over
config file over built-in defaults; ``--show-config`` prints the effective
configuration without running.  Every run writes a ``manifest.json`` that
``replay`` can turn back into bit-identical numeric outputs.

Exit codes: 0 on success, 2 on input or parameter errors, 3 when a fit or
experiment fails (a partial report is still written where possible).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import io as mio
from .errors import (
    DivergentMomentError,
    DomainError,
    ExperimentError,
    FitError,
    InputError,
    ParameterError,
)
from .estimators import (
    ReturnSeries,
    accumulate_returns,
    daily_var_corr,
    detrend,
    leverage_series,
    multiday_var_corr,
    reduced_var_cov,
)
from .fitting import _fit_signed_exp, calibrate, fit_exp, gamma1_profile
from .models import MeanRevertingParams
from .relaxation import (
    HestonUnitParams,
    RelaxationConfig,
    empirical_cumulants,
    relaxation_experiment,
)
from .simulate import SimConfig, simulate_ensemble, simulate_joint_path, simulate_variance_path

_PRICE_BASE = 100.0
_PRICE_EPOCH = date(2000, 1, 3)

_DEFAULTS: dict[str, dict] = {
    "simulate": {
        "gamma": 0.05, "theta": 1e-4, "kappa_m": 0.0, "kappa_h": 0.0, "rho": 0.0,
        "steps": 1000, "dt": 1.0, "substeps": None, "x0": "steady", "seed": 0,
        "paths": 1, "kind": "variance", "workers": 1, "out": ".", "prices_out": None,
    },
    "calibrate": {"prices": None, "tau_max": 100, "out": "."},
    "corr": {
        "input": None, "estimator": "daily", "t": 1, "window": "rolling",
        "tau_max": 100, "out": ".",
    },
    "leverage": {"input": None, "tau_max": 100, "out": "."},
    "gamma1": {
        "input": None, "t_grid": [5, 10, 21, 42, 63], "tau_max": 60,
        "offset_min_t": 21, "out": ".",
    },
    "relax": {
        "gamma": [0.1], "kappa2": 1e-4, "samples": 1000, "seed": 0, "workers": 1,
        "eps": 0.05, "horizon_efolds": 50.0, "n_calibration": 1024, "bins": 40,
        "cumulant_paths": 0, "out": ".",
    },
}


def _float_list(raw) -> list[float]:
    if isinstance(raw, (int, float)):
        return [float(raw)]
    if isinstance(raw, str):
        raw = raw.split(",")
    try:
        out = [float(v) for v in raw]
    except (TypeError, ValueError):
        raise InputError(f"expected a comma-separated list of numbers, got {raw!r}") from None
    if not out:
        raise InputError("expected a non-empty list of numbers")
    return out


def _int_list(raw) -> list[int]:
    out = []
    for v in _float_list(raw):
        if v != int(v):
            raise InputError(f"expected integers, got {raw!r}")
        out.append(int(v))
    return out


def _x0_value(raw):
    if raw == "steady":
        return "steady"
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise InputError(f'x0 must be a number or "steady", got {raw!r}') from None


def _merged(args: argparse.Namespace, command: str) -> dict:
    """Apply option precedence: flags > config file > defaults."""
    eff = dict(_DEFAULTS[command])
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            raw = json.loads(Path(cfg_path).read_text())
        except OSError as exc:
            raise InputError(f"{cfg_path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{cfg_path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise InputError(f"{cfg_path}: config must be a JSON object")
        for key, value in raw.items():
            norm = key.replace("-", "_")
            if norm not in eff:
                raise InputError(f"{cfg_path}: unknown option {key!r} for {command!r}")
            eff[norm] = value
    for key, value in vars(args).items():
        if key in eff and value is not None:
            eff[key] = value
    return eff


def _outdir(eff: dict) -> Path:
    out = Path(eff["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(command: str, eff: dict, outdir: Path, input_paths=()) -> None:
    man = mio.RunManifest.build(command, eff, input_paths, seed=int(eff.get("seed", 0)))
    man.save(outdir / "manifest.json")


def _load_daily_returns(path) -> tuple[ReturnSeries, str]:
    """Read either a price CSV or a returns CSV into a daily return series."""
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            first = fh.readline().strip()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    cols = [c.strip() for c in first.split(",")]
    if cols == ["date", "close"]:
        _, closes = mio.read_prices(path)
        if closes.size < 3:
            raise InputError(f"{path}: insufficient data ({closes.size} price rows)")
        return detrend(closes), "prices"
    if cols == ["date", "return"]:
        _, values = mio.read_returns(path)
        if values.size < 2:
            raise InputError(f"{path}: insufficient data ({values.size} return rows)")
        return ReturnSeries(values - values.mean(), source=str(path)), "returns"
    raise InputError(
        f"{path}, line 1: expected header 'date,close' or 'date,return', got {first!r}"
    )


# -- simulate ---------------------------------------------------------------


def _run_simulate(eff: dict) -> int:
    params = MeanRevertingParams(
        gamma=float(eff["gamma"]), theta=float(eff["theta"]),
        kappa_m=float(eff["kappa_m"]), kappa_h=float(eff["kappa_h"]),
        rho=float(eff["rho"]),
    )
    substeps = eff["substeps"]
    config = SimConfig(
        steps=int(eff["steps"]), dt=float(eff["dt"]),
        substeps=None if substeps is None else int(substeps),
        x0=_x0_value(eff["x0"]), seed=int(eff["seed"]),
    )
    kind = str(eff["kind"])
    if kind not in ("variance", "joint"):
        raise InputError(f"kind must be 'variance' or 'joint', got {kind!r}")
    n_paths = int(eff["paths"])
    if n_paths < 1:
        raise InputError(f"paths must be >= 1, got {n_paths}")
    prices_out = eff["prices_out"]
    if prices_out is not None and (kind != "joint" or n_paths != 1):
        raise InputError("a synthetic price series needs a single path with kind 'joint'")

    outdir = _outdir(eff)
    if n_paths == 1:
        path = simulate_joint_path(params, config) if kind == "joint" \
            else simulate_variance_path(params, config)
        mio.write_path(outdir / "path.csv", path)
        wrote = "path.csv"
        if prices_out is not None:
            closes = _PRICE_BASE * np.exp(np.concatenate(([0.0], np.cumsum(path.returns))))
            dates = [_PRICE_EPOCH + timedelta(days=k) for k in range(closes.size)]
            mio.write_prices(outdir / str(prices_out), dates, closes)
            wrote += f", {prices_out}"
    else:
        ens = simulate_ensemble(params, config, n_paths, kind=kind, workers=int(eff["workers"]))
        mio.write_ensemble(outdir / "ensemble.bin", ens)
        wrote = "ensemble.bin"
    _manifest("simulate", eff, outdir)
    print(f"wrote {wrote} and manifest.json to {outdir} "
          f"({n_paths} path(s) x {config.steps} steps, seed {config.seed})")
    return 0


# -- calibrate ----------------------------------------------------------------


def _run_calibrate(eff: dict) -> int:
    prices_path = eff["prices"]
    if not prices_path:
        raise InputError("calibrate needs a price CSV")
    tau_max = int(eff["tau_max"])
    _, closes = mio.read_prices(prices_path)
    returns = detrend(closes)
    if len(returns) <= 2 * tau_max:
        raise InputError(
            f"insufficient data: {len(returns)} daily returns cannot support "
            f"lags up to {tau_max}"
        )
    outdir = _outdir(eff)
    provenance = {"input": str(prices_path), "sha256": mio.file_sha256(prices_path)}

    report = calibrate(returns, tau_max=tau_max)
    for name, estimator in (
        ("corr_daily.csv", daily_var_corr),
        ("reduced_cov.csv", reduced_var_cov),
        ("leverage.csv", leverage_series),
    ):
        try:
            mio.write_series(outdir / name, estimator(returns, tau_max))
        except (FitError, DomainError) as exc:
            # degenerate inputs can defeat a series; the report records why
            print(f"skipping {name}: {exc}", file=sys.stderr)
    mio.write_json(outdir / "report.json", mio.calibration_report_dict(report, provenance))
    _manifest("calibrate", eff, outdir, [prices_path])

    core = (report.gamma, report.theta, report.amplitude, report.gamma_lev)
    failed = any(math.isnan(v) for v in core)
    print(f"gamma={report.gamma:.4g} theta={report.theta:.4g} "
          f"kappa_m={report.kappa_m:.4g} kappa_h={report.kappa_h:.4g} "
          f"rho_h={report.rho_h:.4g} gamma_lev={report.gamma_lev:.4g}")
    for flag in report.flags:
        print(f"flag: {flag}", file=sys.stderr)
    if failed:
        print("calibration incomplete; partial report written", file=sys.stderr)
        return 3
    return 0


# -- estimator commands -------------------------------------------------------


def _run_corr(eff: dict) -> int:
    if not eff["input"]:
        raise InputError("corr needs a price or returns CSV")
    estimator = str(eff["estimator"])
    if estimator not in ("daily", "multiday", "reduced"):
        raise InputError(f"estimator must be daily, multiday or reduced, got {estimator!r}")
    returns, _ = _load_daily_returns(eff["input"])
    tau_max = int(eff["tau_max"])
    if estimator == "multiday":
        acc = accumulate_returns(returns, int(eff["t"]), mode=str(eff["window"]))
        series = multiday_var_corr(acc, tau_max)
    elif estimator == "reduced":
        series = reduced_var_cov(returns, tau_max)
    else:
        series = daily_var_corr(returns, tau_max)
    outdir = _outdir(eff)
    mio.write_series(outdir / "corr.csv", series)
    provenance = {"input": str(eff["input"]), "sha256": mio.file_sha256(eff["input"])}
    _manifest("corr", eff, outdir, [eff["input"]])
    try:
        fit = fit_exp(series, lag_range=(1, tau_max))
    except (FitError, DomainError) as exc:
        print(f"series written; exponential fit failed: {exc}", file=sys.stderr)
        return 3
    body = {"estimator": series.estimator, "a": fit.a, "gamma": fit.gamma, "r2": fit.r2}
    mio.write_json(outdir / "fit.json", mio._report("exp-fit", provenance, body))
    print(f"{series.estimator}: gamma={fit.gamma:.4g} a={fit.a:.4g} r2={fit.r2:.3f}")
    return 0


def _run_leverage(eff: dict) -> int:
    if not eff["input"]:
        raise InputError("leverage needs a price or returns CSV")
    returns, _ = _load_daily_returns(eff["input"])
    tau_max = int(eff["tau_max"])
    series = leverage_series(returns, tau_max)
    outdir = _outdir(eff)
    mio.write_series(outdir / "leverage.csv", series)
    provenance = {"input": str(eff["input"]), "sha256": mio.file_sha256(eff["input"])}
    _manifest("leverage", eff, outdir, [eff["input"]])
    try:
        corr_fit = fit_exp(daily_var_corr(returns, tau_max), lag_range=(1, tau_max))
        amp, gamma_lev, r2, fell_back = _fit_signed_exp(series, corr_fit.gamma)
    except (FitError, DomainError, DivergentMomentError) as exc:
        print(f"series written; leverage fit failed: {exc}", file=sys.stderr)
        return 3
    body = {
        "amplitude": amp, "gamma_lev": gamma_lev, "r2": r2,
        "amplitude_only_fallback": fell_back, "n_obs": series.n_obs,
    }
    mio.write_json(outdir / "fit.json", mio._report("leverage-fit", provenance, body))
    print(f"leverage: amplitude={amp:.4g} gamma_lev={gamma_lev:.4g} r2={r2:.3f}")
    return 0


def _run_gamma1(eff: dict) -> int:
    if not eff["input"]:
        raise InputError("gamma1 needs a price or returns CSV")
    returns, _ = _load_daily_returns(eff["input"])
    t_grid = _int_list(eff["t_grid"])
    profile = gamma1_profile(
        returns, t_grid, tau_max=int(eff["tau_max"]), offset_min_t=int(eff["offset_min_t"])
    )
    outdir = _outdir(eff)
    with open(outdir / "gamma1.csv", "w", newline="") as fh:
        fh.write("t,a,gamma1,r2\n")
        for t, fit in zip(profile.horizons, profile.fits):
            if fit is None:
                fh.write(f"{int(t)},nan,nan,nan\n")
            else:
                fh.write(f"{int(t)},{fit.a!r},{fit.gamma!r},{fit.r2!r}\n")
    provenance = {"input": str(eff["input"]), "sha256": mio.file_sha256(eff["input"])}
    body = {
        "offset_fit": mio.to_jsonable(profile.offset_fit),
        "offset_min_t": profile.offset_min_t,
        "failures": mio.to_jsonable(profile.failures),
    }
    mio.write_json(outdir / "fit.json", mio._report("gamma1-profile", provenance, body))
    _manifest("gamma1", eff, outdir, [eff["input"]])
    rates = profile.rates()
    ok = np.isfinite(rates).sum()
    print(f"gamma1 profile over {len(t_grid)} horizons ({ok} fits); "
          f"offset fit {'written' if profile.offset_fit else 'unavailable'}")
    if profile.failures and ok == 0:
        return 3
    return 0


# -- relaxation experiment ------------------------------------------------


def _run_relax(eff: dict) -> int:
    gammas = _float_list(eff["gamma"])
    kappa2 = float(eff["kappa2"])
    grid = [HestonUnitParams(gamma=g, kappa2=kappa2) for g in gammas]
    config = RelaxationConfig(
        horizon_efolds=float(eff["horizon_efolds"]), eps=float(eff["eps"]),
        n_calibration=int(eff["n_calibration"]), seed=int(eff["seed"]),
        workers=int(eff["workers"]),
    )
    study = relaxation_experiment(grid, int(eff["samples"]), config)
    outdir = _outdir(eff)
    provenance = {"seed": config.seed}
    mio.write_json(outdir / "report.json", mio.relaxation_study_dict(study, provenance))
    for i, result in enumerate(study.results):
        with open(outdir / f"samples_{i}.csv", "w", newline="") as fh:
            fh.write("seed,time,ks_min,ks_at_time,ks_final,flag\n")
            for s in result.samples:
                fh.write(f"{s.seed},{s.time!r},{s.ks_min!r},{s.ks_at_time!r},"
                         f"{s.ks_final!r},{s.flag}\n")
        if result.times.size:
            mio.write_histogram(outdir / f"hist_{i}.csv", result.times, bins=int(eff["bins"]))

    n_cum = int(eff["cumulant_paths"])
    if n_cum:
        for i, (unit, result) in enumerate(zip(grid, study.results)):
            sim = SimConfig(steps=result.horizon + 1, dt=1.0, x0=1.0, seed=config.seed)
            ens = simulate_ensemble(unit.to_heston(), sim, n_cum, workers=config.workers)
            times = np.unique(np.linspace(1, result.horizon, 40).round())
            curves = empirical_cumulants(ens, times=times)
            mio.write_cumulants(outdir / f"cumulants_{i}.csv", curves)

    _manifest("relax", eff, outdir)
    bad = False
    for unit, result in zip(grid, study.results):
        label = f"gamma={unit.gamma:g} kappa2={unit.kappa2:g}"
        if result.times.size:
            best = result.best_fit()
            ranking = f"best fit {best.family} (ks={best.ks:.4f})" if best else "no fits"
            print(f"{label}: mean time {result.times.mean():.1f}, "
                  f"{result.n_flagged}/{result.n_samples} flagged, {ranking}")
        else:
            print(f"{label}: all {result.n_samples} samples flagged")
        if result.unreliable:
            bad = True
            print(f"{label}: experiment unreliable "
                  f"(flagged fraction {result.flagged_fraction:.3f})", file=sys.stderr)
    if study.slopes is not None:
        print("scaling slopes: " + ", ".join(f"{k}={v:.3f}" for k, v in study.slopes.items()))
    return 3 if bad else 0


# -- replay -------------------------------------------------------------------

_RUNNERS = {
    "simulate": _run_simulate,
    "calibrate": _run_calibrate,
    "corr": _run_corr,
    "leverage": _run_leverage,
    "gamma1": _run_gamma1,
    "relax": _run_relax,
}


def _run_replay(args: argparse.Namespace) -> int:
    man = mio.RunManifest.load(args.manifest)
    if man.command not in _RUNNERS:
        raise InputError(f"manifest names unknown command {man.command!r}")
    man.verify_inputs()
    eff = dict(_DEFAULTS[man.command])
    for key, value in man.params.items():
        norm = key.replace("-", "_")
        if norm not in eff:
            raise InputError(f"manifest has unknown option {key!r} for {man.command!r}")
        eff[norm] = value
    if args.out is not None:
        eff["out"] = args.out
    if args.workers is not None and "workers" in eff:
        eff["workers"] = args.workers
    return _RUNNERS[man.command](eff)


# -- parser -------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="FILE", help="JSON file of option defaults")
    sub.add_argument("--show-config", action="store_true",
                     help="print the effective configuration and exit")
    sub.add_argument("--out", metavar="DIR", help="output directory (default: current)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meanrev",
        description="Mean-reverting stochastic-variance models: simulation, "
                    "calibration and relaxation-time experiments.",
    )
    parser.add_argument("--version", action="version", version=f"meanrev {mio.TOOL_VERSION}")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = subs.add_parser("simulate", help="simulate variance paths or ensembles")
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--kappa-m", type=float)
    p.add_argument("--kappa-h", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--steps", type=float, help="reported steps (scientific notation ok)")
    p.add_argument("--dt", type=float)
    p.add_argument("--substeps", type=int)
    p.add_argument("--x0", help='initial variance or "steady"')
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int, help="1 writes a CSV path, >1 a binary ensemble")
    p.add_argument("--kind", choices=("variance", "joint"))
    p.add_argument("--workers", type=int)
    p.add_argument("--prices-out", metavar="NAME",
                   help="also write a synthetic price CSV (single joint path only)")
    _add_common(p)
    p.set_defaults(func=lambda a: _dispatch(a, "simulate"))

    p = subs.add_parser("calibrate", help="recover model parameters from a price CSV")
    p.add_argument("prices", nargs="?", help="price CSV (date,close)")
    p.add_argument("--tau-max", type=int)
    _add_common(p)
    p.set_defaults(func=lambda a: _dispatch(a, "calibrate"))

    p = subs.add_parser("corr", help="variance-correlation estimators and decay fit")
    p.add_argument("input", nargs="?", help="price or returns CSV")
    p.add_argument("--estimator", choices=("daily", "multiday", "reduced"))
    p.add_argument("--t", type=int, help="accumulation horizon for multiday")
    p.add_argument("--window", choices=("rolling", "disjoint"))
    p.add_argument("--tau-max", type=int)
    _add_common(p)
    p.set_defaults(func=lambda a: _dispatch(a, "corr"))

    p = subs.add_parser("leverage", help="return/variance cross-correlation and decay fit")
    p.add_argument("input", nargs="?", help="price or returns CSV")
    p.add_argument("--tau-max", type=int)
    _add_common(p)
    p.set_defaults(func=lambda a: _dispatch(a, "leverage"))

    p = subs.add_parser("gamma1", help="per-horizon decay rates of the multiday correlation")
    p.add_argument("input", nargs="?", help="price or returns CSV")
    p.add_argument("--t-grid", help="comma-separated horizons, e.g. 5,10,21")
    p.add_argument("--tau-max", type=int)
    p.add_argument("--offset-min-t", type=int)
    _add_common(p)
    p.set_defaults(func=lambda a: _dispatch(a, "gamma1"))

    p = subs.add_parser("relax", help="relaxation-time experiment")
    p.add_argument("--gamma", help="reversion rate, or comma-separated grid")
    p.add_argument("--kappa2", type=float)
    p.add_argument("--samples", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--eps", type=float, help="saturation tolerance above the noise floor")
    p.add_argument("--horizon-efolds", type=float)
    p.add_argument("--n-calibration", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--cumulant-paths", type=int,
                   help="extra ensemble size for cumulant relaxation curves (0: skip)")
    _add_common(p)
    p.set_defaults(func=lambda a: _dispatch(a, "relax"))

    p = subs.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", help="manifest.json from a previous run")
    p.add_argument("--out", metavar="DIR", help="redirect outputs")
    p.add_argument("--workers", type=int, help="override worker count")
    p.set_defaults(func=_run_replay)

    return parser


def _dispatch(args: argparse.Namespace, command: str) -> int:
    eff = _merged(args, command)
    for key in ("steps", "samples"):
        if key in eff and eff[key] is not None:
            value = float(eff[key])
            if value != int(value):
                raise InputError(f"{key} must be an integer, got {value}")
            eff[key] = int(value)
    if getattr(args, "show_config", False):
        print(json.dumps(mio.to_jsonable(eff), indent=2))
        return 0
    return _RUNNERS[command](eff)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParameterError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
