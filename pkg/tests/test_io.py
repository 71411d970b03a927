"""File-format round trips, malformed-input diagnostics, and manifest checks."""

import hashlib
import json
from datetime import date, timedelta

import numpy as np
import pytest

from meanrev import (
    CorrSeries,
    InputError,
    LeverageSeries,
    MeanRevertingParams,
    ParameterError,
    RunManifest,
    SimConfig,
    file_sha256,
    read_ensemble,
    read_prices,
    read_returns,
    read_series,
    simulate_ensemble,
    simulate_joint_path,
    simulate_variance_path,
    write_ensemble,
    write_prices,
    write_returns,
    write_series,
)
from meanrev import io as mio
from meanrev.fitting import ExpFit, MleReport, mle_fit
from meanrev.relaxation import HestonUnitParams, RelaxationConfig, relaxation_experiment

PARAMS = MeanRevertingParams(gamma=0.2, theta=1e-4, kappa_h=2e-3, rho=-0.2)


def make_dates(n, start=date(2001, 3, 1)):
    return [start + timedelta(days=k) for k in range(n)]


class TestPricesCsv:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, 64)))
        dates = make_dates(64)
        f = tmp_path / "p.csv"
        write_prices(f, dates, closes)
        got_dates, got = read_prices(f)
        assert got_dates == dates
        assert np.array_equal(got, closes)

    def test_header_mismatch(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("time,price\n2001-01-01,3.0\n")
        with pytest.raises(InputError, match="line 1"):
            read_prices(f)

    def test_bad_date_reports_line(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("date,close\n2001-01-01,3.0\n01/02/2001,3.1\n")
        with pytest.raises(InputError, match="line 3"):
            read_prices(f)

    def test_non_increasing_dates(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("date,close\n2001-01-02,3.0\n2001-01-02,3.1\n")
        with pytest.raises(InputError, match="line 3.*increasing"):
            read_prices(f)

    def test_missing_close_reports_line(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("date,close\n2001-01-01,3.0\n2001-01-02,\n2001-01-03,3.2\n")
        with pytest.raises(InputError, match="line 3.*missing close"):
            read_prices(f)

    def test_unparseable_and_nonpositive_close(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("date,close\n2001-01-01,abc\n")
        with pytest.raises(InputError, match="line 2.*invalid close"):
            read_prices(f)
        f.write_text("date,close\n2001-01-01,-3.0\n")
        with pytest.raises(InputError, match="line 2.*positive"):
            read_prices(f)

    def test_wrong_column_count(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("date,close\n2001-01-01,3.0,extra\n")
        with pytest.raises(InputError, match="line 2.*2 columns"):
            read_prices(f)

    def test_empty_file(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("")
        with pytest.raises(InputError, match="empty"):
            read_prices(f)

    def test_byte_order_mark_is_tolerated(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_bytes(b"\xef\xbb\xbfdate,close\n2001-01-01,3.0\n")
        _, closes = read_prices(f)
        assert closes[0] == 3.0


class TestReturnsCsv:
    def test_round_trip_keeps_sign_and_bits(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.normal(0, 0.01, 50)
        dates = make_dates(50)
        f = tmp_path / "r.csv"
        write_returns(f, dates, values)
        got_dates, got = read_returns(f)
        assert got_dates == dates
        assert np.array_equal(got, values)

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(ParameterError, match="dates"):
            write_returns(tmp_path / "r.csv", make_dates(3), np.zeros(4))


class TestSeriesCsv:
    def test_corr_series_round_trip_and_sidecar(self, tmp_path):
        series = CorrSeries(
            lags=np.arange(1, 6), values=np.exp(-0.1 * np.arange(1, 6)),
            estimator="daily-corr", horizon=1, stride=1, n_obs=5000,
        )
        f = tmp_path / "corr.csv"
        write_series(f, series)
        lags, values = read_series(f)
        assert np.array_equal(lags, series.lags)
        assert np.array_equal(values, series.values)
        side = json.loads((tmp_path / "corr.csv.json").read_text())
        assert side["estimator"] == "daily-corr"
        assert side["horizon"] == 1
        assert side["stride"] == 1
        assert side["n_obs"] == 5000

    def test_leverage_series_gets_a_tag(self, tmp_path):
        series = LeverageSeries(
            lags=np.arange(5), values=np.linspace(-1, 1, 5), horizon=1, n_obs=99
        )
        f = tmp_path / "lev.csv"
        write_series(f, series)
        side = json.loads((tmp_path / "lev.csv.json").read_text())
        assert side["estimator"] == "leverage"
        assert side["n_obs"] == 99

    def test_malformed_series_row(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("lag,value\n1,0.5\ntwo,0.3\n")
        with pytest.raises(InputError, match="line 3"):
            read_series(f)


class TestPathCsv:
    def test_variance_path_columns(self, tmp_path):
        path = simulate_variance_path(PARAMS, SimConfig(steps=20, x0=1e-4, seed=3))
        f = tmp_path / "path.csv"
        mio.write_path(f, path)
        lines = f.read_text().splitlines()
        assert lines[0] == "step,v"
        assert len(lines) == 21
        got = np.array([float(line.split(",")[1]) for line in lines[1:]])
        assert np.array_equal(got, path.values)

    def test_joint_path_includes_returns(self, tmp_path):
        path = simulate_joint_path(PARAMS, SimConfig(steps=15, x0=1e-4, seed=3))
        f = tmp_path / "path.csv"
        mio.write_path(f, path)
        lines = f.read_text().splitlines()
        assert lines[0] == "step,v,dx"
        got_dx = np.array([float(line.split(",")[2]) for line in lines[1:]])
        assert np.array_equal(got_dx, path.returns)


class TestEnsembleContainer:
    def test_joint_round_trip(self, tmp_path):
        config = SimConfig(steps=12, dt=0.5, x0="steady", seed=11)
        ens = simulate_ensemble(PARAMS, config, 7, kind="joint", workers=2)
        f = tmp_path / "e.bin"
        write_ensemble(f, ens)
        values, returns, header = read_ensemble(f)
        assert np.array_equal(values, ens.values)
        assert np.array_equal(returns, ens.returns)
        assert header == {"version": 1, "n_paths": 7, "steps": 12, "dt": 0.5, "seed": 11}

    def test_variance_only_has_no_returns_payload(self, tmp_path):
        ens = simulate_ensemble(PARAMS, SimConfig(steps=9, seed=2), 4)
        f = tmp_path / "e.bin"
        write_ensemble(f, ens)
        values, returns, _ = read_ensemble(f)
        assert returns is None
        assert np.array_equal(values, ens.values)

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "e.bin"
        f.write_bytes(b"NOPE" + bytes(60))
        with pytest.raises(InputError, match="magic"):
            read_ensemble(f)

    def test_truncated_payload(self, tmp_path):
        ens = simulate_ensemble(PARAMS, SimConfig(steps=9, seed=2), 4)
        f = tmp_path / "e.bin"
        write_ensemble(f, ens)
        raw = f.read_bytes()
        f.write_bytes(raw[:-16])
        with pytest.raises(InputError, match="payload"):
            read_ensemble(f)

    def test_unsupported_version(self, tmp_path):
        ens = simulate_ensemble(PARAMS, SimConfig(steps=9, seed=2), 4)
        f = tmp_path / "e.bin"
        write_ensemble(f, ens)
        raw = bytearray(f.read_bytes())
        raw[4] = 9
        f.write_bytes(bytes(raw))
        with pytest.raises(InputError, match="version"):
            read_ensemble(f)


class TestJsonable:
    def test_scalars_and_non_finite(self):
        assert mio.to_jsonable(np.float64(1.5)) == 1.5
        assert mio.to_jsonable(np.int32(4)) == 4
        assert mio.to_jsonable(float("nan")) is None
        assert mio.to_jsonable(float("inf")) is None
        assert mio.to_jsonable([1, (2.0, None)]) == [1, [2.0, None]]

    def test_arrays_and_dataclasses(self):
        out = mio.to_jsonable({"fit": ExpFit(a=1.0, gamma=0.1, r2=float("nan"))})
        assert out == {"fit": {"a": 1.0, "gamma": 0.1, "r2": None}}
        assert mio.to_jsonable(np.array([1.0, np.nan])) == [1.0, None]

    def test_unknown_type_is_an_error(self):
        with pytest.raises(ParameterError, match="serialize"):
            mio.to_jsonable(object())


class TestHistogramCsv:
    def test_counts_cover_the_sample(self, tmp_path):
        rng = np.random.default_rng(5)
        x = rng.gamma(3.0, 20.0, 500)
        f = tmp_path / "h.csv"
        mio.write_histogram(f, x, bins=16)
        lines = f.read_text().splitlines()
        assert lines[0] == "bin_left,bin_right,count"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 16
        assert sum(int(r[2]) for r in rows) == 500
        edges = [float(r[0]) for r in rows] + [float(rows[-1][1])]
        assert np.all(np.diff(edges) > 0)


class TestReportDicts:
    def test_mle_report_fields(self):
        rng = np.random.default_rng(2)
        report = mle_fit(rng.gamma(3.0, 20.0, 400), "gamma")
        out = mio.mle_report_dict(report, {"seed": 2})
        assert out["schema_version"] == 1
        assert out["kind"] == "mle"
        assert out["provenance"] == {"seed": 2}
        assert out["family"] == "gamma"
        assert set(out) >= {"params", "param_names", "ks", "loglik", "n"}
        json.dumps(out)

    def test_relaxation_study_dict_shape(self):
        study = relaxation_experiment(
            HestonUnitParams(0.5, 1e-2), 100,
            RelaxationConfig(seed=0, n_calibration=128, workers=2),
        )
        out = mio.relaxation_study_dict(study, {"seed": 0})
        assert out["kind"] == "relaxation-study"
        assert "workers" not in out["config"]
        (res,) = out["results"]
        assert res["n_samples"] == 100
        assert len(res["samples"]) == 100
        assert res["fits"][0]["ks"] <= res["fits"][-1]["ks"]
        flagged = [s for s in res["samples"] if s["flag"]]
        assert len(flagged) == res["n_flagged"]
        assert all(s["time"] is None for s in flagged)
        json.dumps(out)


class TestRunManifest:
    def test_build_save_load_round_trip(self, tmp_path):
        data = tmp_path / "in.csv"
        data.write_text("date,close\n2001-01-01,3.0\n")
        man = RunManifest.build(
            "calibrate", {"tau_max": 80, "out": "."}, [data], seed=7
        )
        assert man.inputs[str(data)] == file_sha256(data)
        f = tmp_path / "manifest.json"
        man.save(f)
        back = RunManifest.load(f)
        assert back.command == "calibrate"
        assert back.params == {"tau_max": 80, "out": "."}
        assert back.seed == 7
        assert back.inputs == man.inputs
        back.verify_inputs()

    def test_changed_input_is_detected(self, tmp_path):
        data = tmp_path / "in.csv"
        data.write_text("date,close\n2001-01-01,3.0\n")
        man = RunManifest.build("calibrate", {}, [data])
        data.write_text("date,close\n2001-01-01,4.0\n")
        with pytest.raises(InputError, match="changed"):
            man.verify_inputs()
        data.unlink()
        with pytest.raises(InputError, match="missing"):
            man.verify_inputs()

    def test_load_rejects_non_manifests(self, tmp_path):
        f = tmp_path / "m.json"
        f.write_text("{not json")
        with pytest.raises(InputError, match="invalid JSON"):
            RunManifest.load(f)
        f.write_text('{"kind": "something-else"}')
        with pytest.raises(InputError, match="not a run manifest"):
            RunManifest.load(f)

    def test_load_rejects_unknown_schema(self, tmp_path):
        man = RunManifest.build("simulate", {"seed": 1})
        f = tmp_path / "m.json"
        man.save(f)
        raw = json.loads(f.read_text())
        raw["schema_version"] = 99
        f.write_text(json.dumps(raw))
        with pytest.raises(InputError, match="schema_version"):
            RunManifest.load(f)


class TestSha256:
    def test_matches_hashlib(self, tmp_path):
        f = tmp_path / "x.bin"
        payload = b"abc" * 1000
        f.write_bytes(payload)
        assert file_sha256(f) == hashlib.sha256(payload).hexdigest()
