"""Readers and writers for the on-disk formats.

All CSV files carry a header row, use the dot as decimal separator and
contain no thousands separators.  Floats are written with shortest
round-trip precision, so reading a file back reproduces the array
bit-exactly.  Dates are ISO-8601 (``YYYY-MM-DD``).

The binary ensemble container stores only the fields needed to interpret
the float64 payload; full provenance (model parameters, seeds, tool
version) lives in the ``RunManifest`` JSON written next to every output.

JSON schemas are versioned through a top-level ``schema_version`` field.
Non-finite floats serialize as ``null``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import dataclass, fields, is_dataclass
from datetime import date, datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import InputError, ParameterError
from .relaxation import RelaxationStudy

SCHEMA_VERSION = 1

_MAGIC = b"MRVE"
# magic, format version, n_paths, steps, dt, seed, flags (bit 0: returns payload)
_BIN_HEADER = struct.Struct("<4sIQQdQI")

try:
    TOOL_VERSION = metadata.version("meanrev")
except metadata.PackageNotFoundError:  # running from a source tree
    TOOL_VERSION = "0.0.0"


def _fmt(x) -> str:
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def file_sha256(path) -> str:
    """Hex SHA-256 of a file's contents."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- CSV tables ----------------------------------------------------------------


def _read_rows(path, header: list[str]) -> list[tuple[int, list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1) if row]
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    if not rows:
        raise InputError(f"{path}: file is empty")
    first = [c.strip() for c in rows[0][1]]
    if first != header:
        raise InputError(
            f"{path}, line {rows[0][0]}: expected header {','.join(header)!r}, "
            f"got {','.join(first)!r}"
        )
    return rows[1:]


def _read_dated(path, value_col: str, positive: bool):
    rows = _read_rows(path, ["date", value_col])
    dates: list[date] = []
    values = np.empty(len(rows))
    for k, (lineno, row) in enumerate(rows):
        if len(row) != 2:
            raise InputError(f"{path}, line {lineno}: expected 2 columns, got {len(row)}")
        try:
            d = date.fromisoformat(row[0].strip())
        except ValueError:
            raise InputError(
                f"{path}, line {lineno}: invalid ISO-8601 date {row[0]!r}"
            ) from None
        if dates and d <= dates[-1]:
            raise InputError(f"{path}, line {lineno}: dates must be strictly increasing")
        cell = row[1].strip()
        if not cell:
            raise InputError(f"{path}, line {lineno}: missing {value_col}")
        try:
            v = float(cell)
        except ValueError:
            raise InputError(
                f"{path}, line {lineno}: invalid {value_col} {row[1]!r}"
            ) from None
        if not math.isfinite(v) or (positive and v <= 0):
            raise InputError(f"{path}, line {lineno}: {value_col} must be a finite "
                             f"{'positive ' if positive else ''}number, got {cell}")
        dates.append(d)
        values[k] = v
    return dates, values


def read_prices(path) -> tuple[list[date], np.ndarray]:
    """Read a ``date,close`` CSV; closes must be positive and dates increasing."""
    return _read_dated(path, "close", positive=True)


def read_returns(path) -> tuple[list[date], np.ndarray]:
    """Read a ``date,return`` CSV of daily log returns."""
    return _read_dated(path, "return", positive=False)


def _write_dated(path, value_col, dates, values) -> None:
    values = np.asarray(values, dtype=float)
    if len(dates) != values.size:
        raise ParameterError(f"{len(dates)} dates for {values.size} values")
    with open(path, "w", newline="") as fh:
        fh.write(f"date,{value_col}\n")
        for d, v in zip(dates, values):
            fh.write(f"{d.isoformat()},{_fmt(v)}\n")


def write_prices(path, dates, closes) -> None:
    _write_dated(path, "close", dates, closes)


def write_returns(path, dates, values) -> None:
    _write_dated(path, "return", dates, values)


def write_series(path, series, estimator: str | None = None) -> None:
    """Write a lag-indexed estimator series as ``lag,value`` plus a JSON sidecar.

    The sidecar (``<path>.json``) records the estimator tag, accumulation
    horizon, stride and the number of observations behind the estimate.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("lag,value\n")
        for lag, v in zip(series.lags, series.values):
            fh.write(f"{int(lag)},{_fmt(v)}\n")
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "kind": "estimator-series",
        "estimator": estimator or getattr(series, "estimator", "leverage"),
        "horizon": int(series.horizon),
        "stride": int(getattr(series, "stride", 1)),
        "n_obs": int(series.n_obs),
    }
    write_json(path.with_suffix(path.suffix + ".json"), sidecar)


def read_series(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``lag,value`` CSV back into arrays."""
    rows = _read_rows(path, ["lag", "value"])
    lags = np.empty(len(rows), dtype=int)
    values = np.empty(len(rows))
    for k, (lineno, row) in enumerate(rows):
        if len(row) != 2:
            raise InputError(f"{path}, line {lineno}: expected 2 columns, got {len(row)}")
        try:
            lags[k] = int(row[0])
            values[k] = float(row[1])
        except ValueError:
            raise InputError(f"{path}, line {lineno}: invalid row {row!r}") from None
    return lags, values


def write_path(path, result) -> None:
    """Write a simulated path as ``step,v`` or ``step,v,dx``."""
    returns = getattr(result, "returns", None)
    values = getattr(result, "variance", None)
    if values is None:
        values = result.values
    with open(path, "w", newline="") as fh:
        if returns is None:
            fh.write("step,v\n")
            for k, v in enumerate(values):
                fh.write(f"{k},{_fmt(v)}\n")
        else:
            fh.write("step,v,dx\n")
            for k, (v, r) in enumerate(zip(values, returns)):
                fh.write(f"{k},{_fmt(v)},{_fmt(r)}\n")


def write_histogram(path, samples, bins=40) -> None:
    """Histogram a sample as ``bin_left,bin_right,count`` rows."""
    counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins)
    with open(path, "w", newline="") as fh:
        fh.write("bin_left,bin_right,count\n")
        for left, right, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{_fmt(left)},{_fmt(right)},{int(c)}\n")


def write_cumulants(path, curves) -> None:
    """Write cumulant relaxation curves in long form.

    Columns: ``order,time,theory,empirical,se``; one block per curve.
    """
    with open(path, "w", newline="") as fh:
        fh.write("order,time,theory,empirical,se\n")
        for c in curves:
            for t, th, em, se in zip(c.times, c.theory, c.empirical, c.se):
                fh.write(f"{c.order},{_fmt(t)},{_fmt(th)},{_fmt(em)},{_fmt(se)}\n")


# -- binary ensemble container ---------------------------------------------


def write_ensemble(path, ensemble) -> None:
    """Write an ensemble's float64 payload with a fixed-size header.

    Header fields: magic ``MRVE``, format version, n_paths, steps, dt, seed,
    flags.  Flag bit 0 marks a trailing returns payload of the same shape.
    """
    values = np.ascontiguousarray(ensemble.values, dtype=np.float64)
    returns = ensemble.returns
    flags = 1 if returns is not None else 0
    n_paths, steps = values.shape
    with open(path, "wb") as fh:
        fh.write(
            _BIN_HEADER.pack(
                _MAGIC, 1, n_paths, steps, float(ensemble.config.dt),
                int(ensemble.config.seed), flags,
            )
        )
        fh.write(values.tobytes())
        if returns is not None:
            fh.write(np.ascontiguousarray(returns, dtype=np.float64).tobytes())


def read_ensemble(path) -> tuple[np.ndarray, np.ndarray | None, dict]:
    """Read an ensemble container; returns (values, returns or None, header)."""
    with open(path, "rb") as fh:
        raw = fh.read(_BIN_HEADER.size)
        if len(raw) < _BIN_HEADER.size:
            raise InputError(f"{path}: truncated header")
        magic, version, n_paths, steps, dt, seed, flags = _BIN_HEADER.unpack(raw)
        if magic != _MAGIC:
            raise InputError(f"{path}: not an ensemble container (bad magic)")
        if version != 1:
            raise InputError(f"{path}: unsupported container version {version}")
        payload = fh.read()
    need = n_paths * steps * 8 * (2 if flags & 1 else 1)
    if len(payload) != need:
        raise InputError(f"{path}: expected {need} payload bytes, got {len(payload)}")
    block = n_paths * steps * 8
    values = np.frombuffer(payload[:block]).reshape(n_paths, steps)
    returns = np.frombuffer(payload[block:]).reshape(n_paths, steps) if flags & 1 else None
    header = {"version": version, "n_paths": n_paths, "steps": steps, "dt": dt, "seed": seed}
    return values, returns, header


# -- JSON reports ------------------------------------------------------------


def to_jsonable(obj):
    """Convert dataclasses, numpy types and containers to JSON-ready values.

    Non-finite floats map to None; unknown types are an error rather than a
    silently stringified value.
    """
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (date, datetime)):
        return obj.isoformat()
    raise ParameterError(f"cannot serialize {type(obj).__name__} to JSON")


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(payload), fh, indent=2, allow_nan=False)
        fh.write("\n")


def _report(kind: str, provenance, body: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "provenance": to_jsonable(provenance),
        **body,
    }


def calibration_report_dict(report, provenance) -> dict:
    """JSON form of a calibration report; field names match the type."""
    return _report("calibration", provenance, to_jsonable(report))


def mle_report_dict(report, provenance) -> dict:
    """JSON form of one maximum-likelihood fit."""
    return _report("mle", provenance, to_jsonable(report))


def relaxation_study_dict(study: RelaxationStudy, provenance) -> dict:
    """JSON form of a relaxation-time study.

    Per grid point: parameters, sample records, family fits ranked by KS
    distance, flag bookkeeping and the reliability verdict; study-level
    scaling slopes when the grid spans several reversion rates.
    """
    results = []
    for r in study.results:
        results.append(
            {
                "params": to_jsonable(r.params),
                "horizon": int(r.horizon),
                "n_samples": r.n_samples,
                "n_flagged": r.n_flagged,
                "flagged_fraction": to_jsonable(r.flagged_fraction),
                "flag_counts": to_jsonable(r.flag_counts),
                "unreliable": r.unreliable,
                "fits": [to_jsonable(f) for f in r.fits],
                "samples": [to_jsonable(s) for s in r.samples],
            }
        )
    config = to_jsonable(study.config)
    config.pop("workers", None)  # execution detail, not an experiment parameter
    return _report(
        "relaxation-study",
        provenance,
        {
            "config": config,
            "slopes": to_jsonable(study.slopes),
            "results": results,
        },
    )


# -- run manifest ------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a command run bit-exactly.

    ``params`` is the effective parameter set after merging flags, config
    file and defaults; ``inputs`` maps each input path to its SHA-256.
    The timestamp is informational and excluded from reproducibility.
    """

    command: str
    params: dict
    inputs: dict
    seed: int
    tool_version: str
    created: str
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def build(cls, command: str, params: dict, input_paths=(), seed: int = 0) -> "RunManifest":
        return cls(
            command=command,
            params=dict(params),
            inputs={str(p): file_sha256(p) for p in input_paths},
            seed=int(seed),
            tool_version=TOOL_VERSION,
            created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )

    def save(self, path) -> None:
        write_json(path, {"kind": "run-manifest", **to_jsonable(self)})

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InputError(f"{path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict) or raw.get("kind") != "run-manifest":
            raise InputError(f"{path}: not a run manifest")
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise InputError(
                f"{path}: unsupported schema_version {raw.get('schema_version')!r}"
            )
        try:
            return cls(
                command=raw["command"],
                params=dict(raw["params"]),
                inputs=dict(raw["inputs"]),
                seed=int(raw["seed"]),
                tool_version=str(raw["tool_version"]),
                created=str(raw["created"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: malformed manifest ({exc})") from exc

    def verify_inputs(self) -> None:
        """Raise when a recorded input is missing or its hash changed."""
        for p, digest in self.inputs.items():
            try:
                now = file_sha256(p)
            except OSError:
                raise InputError(f"manifest input {p} is missing") from None
            if now != digest:
                raise InputError(f"manifest input {p} changed since the recorded run")
