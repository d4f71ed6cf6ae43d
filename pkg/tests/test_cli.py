"""End-to-end command-line interface behaviour."""

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

import richfit
from richfit.cli import main
from richfit.data import bundled_snapshot_path
from richfit.estimator import NonConvergenceError

LOG_SCALE = {"alpha", "r", "h", "s", "nu"}


def _read_json(path):
    return json.loads(Path(path).read_text())


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip()
    return json.loads(err.splitlines()[-1])


# -- error paths -------------------------------------------------------------

def test_unknown_flag_exit_2_no_files(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["fit", "--no-such-flag"]) == 2
    capsys.readouterr()
    assert list(tmp_path.iterdir()) == []


def test_missing_subcommand_exit_2(capsys):
    assert main([]) == 2
    capsys.readouterr()


def test_missing_input_exit_3_json_stderr(tmp_path, capsys):
    rc = main(["fit", "--input", str(tmp_path / "absent.csv"),
               "--out-dir", str(tmp_path)])
    assert rc == 3
    err = _stderr_json(capsys)
    assert err["error"] == "data"
    assert err["type"] and err["message"]


def test_baseline_additive_conflict_exit_2(tmp_path, capsys):
    rc = main(["fit", "--baseline", "--covariates", "additive",
               "--out-dir", str(tmp_path)])
    assert rc == 2
    assert _stderr_json(capsys)["error"] == "usage"


def test_nonconvergence_exit_4(tmp_path, monkeypatch, capsys):
    def refuse(*args, **kwargs):
        raise NonConvergenceError("no start produced a finite objective")
    monkeypatch.setattr("richfit.cli.fit", refuse)
    rc = main(["fit", "--out-dir", str(tmp_path)])
    assert rc == 4
    err = _stderr_json(capsys)
    assert err["error"] == "non-convergence"
    assert err["type"] == "NonConvergenceError"


def test_simulate_without_theta_exit_2(tmp_path, capsys):
    rc = main(["simulate", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert _stderr_json(capsys)["error"] == "usage"


def test_backtest_grid_without_window_ends_exit_2(tmp_path, capsys):
    rc = main(["backtest", "--mode", "grid", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert _stderr_json(capsys)["error"] == "usage"


# -- config file -------------------------------------------------------------

def test_config_file_flags_win(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment line\n"
        "seed = 7\n"
        "start-date = 2020-03-01\n"
        "\n"
    )
    rc = main(["simulate", "--config", str(cfg),
               "--theta", "150,220000,0.03,30,5,20", "--baseline",
               "--length", "40", "--seed", "9",
               "--out-dir", str(tmp_path / "out")])
    capsys.readouterr()
    assert rc == 0
    rep = _read_json(tmp_path / "out" / "simulate_report.json")["report"]
    # flag beats the file; unflagged keys come from the file
    assert rep["seed"] == 9
    assert rep["config"]["start_date"] == "2020-03-01"
    with open(tmp_path / "out" / "simulated.csv") as fh:
        first = next(csv.DictReader(fh))
    assert first["data"] == "2020-03-01"


def test_config_file_bad_line_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("this is not a pair\n")
    rc = main(["simulate", "--config", str(cfg), "--theta", "1,1,1,1,1",
               "--out-dir", str(tmp_path / "out")])
    assert rc == 2
    assert _stderr_json(capsys)["error"] == "usage"


# -- simulate ----------------------------------------------------------------

def test_simulate_emits_ingestable_csv(tmp_path, capsys):
    rc = main(["simulate", "--baseline", "--theta", "150,220000,0.03,30,5,20",
               "--length", "60", "--seed", "7", "--out-dir", str(tmp_path)])
    capsys.readouterr()
    assert rc == 0
    with open(tmp_path / "simulated.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60
    assert {"data", "nuovi_positivi", "totale_positivi"} <= set(rows[0])
    daily = [int(r["nuovi_positivi"]) for r in rows]
    cum = [int(r["totale_positivi"]) for r in rows]
    assert cum == list(np.cumsum(daily))


# -- bundled fit: reports, embeds, determinism -------------------------------

@pytest.fixture(scope="module")
def bundled_fit_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("clifit")
    argv = ["fit", "--family", "negbin", "--baseline",
            "--indicator", "positives", "--seed", "3", "--n-starts", "40",
            "--out-dir", str(out)]
    rc = main(argv)
    assert rc == 0
    return out, argv


def test_bundled_fit_report(bundled_fit_run):
    out, _ = bundled_fit_run
    payload = _read_json(out / "fit_report.json")
    fitrep = payload["fit"]
    assert fitrep["converged"]
    assert 140.0 < fitrep["estimates"]["alpha"] < 215.0
    assert 10.0 < fitrep["estimates"]["nu"] < 30.0
    assert 0.026 < fitrep["estimates"]["h"] < 0.032
    for rec in fitrep["intervals"].values():
        assert rec["lower"] <= rec["estimate"] <= rec["upper"]
    with open(out / "fitted_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == fitrep["n_obs"]
    assert float(rows[0]["fitted"]) > 0.0


def test_report_embeds_provenance(bundled_fit_run):
    out, _ = bundled_fit_run
    rep = _read_json(out / "fit_report.json")["report"]
    digest = hashlib.sha256(
        Path(bundled_snapshot_path("national")).read_bytes()).hexdigest()
    assert rep["input_sha256"] == digest
    assert rep["seed"] == 3
    assert rep["version"] == richfit.__version__
    assert rep["config"]["subcommand"] == "fit"
    assert rep["config"]["n_starts"] == 40


def test_rerun_byte_identical(bundled_fit_run, capsys):
    out, argv = bundled_fit_run
    before = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(argv) == 0
    capsys.readouterr()
    after = {p.name: p.read_bytes() for p in out.iterdir()}
    assert before == after


def test_input_files_not_mutated(bundled_fit_run):
    path = Path(bundled_snapshot_path("national"))
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    rep = _read_json(bundled_fit_run[0] / "fit_report.json")["report"]
    assert rep["input_sha256"] == digest


# -- simulate -> fit round trip ----------------------------------------------

def test_simulate_fit_round_trip_within_3_se(tmp_path, capsys):
    true = {"alpha": 175.0, "r": 221940.0, "h": 0.05, "p": 10.0,
            "s": 3.0, "nu": 18.76}
    sim = tmp_path / "sim"
    rc = main(["simulate", "--baseline",
               "--theta", "175,221940,0.05,10,3,18.76",
               "--length", "150", "--seed", "2000", "--out-dir", str(sim)])
    assert rc == 0
    rc = main(["fit", "--input", str(sim / "simulated.csv"),
               "--indicator", "positives", "--family", "negbin", "--baseline",
               "--seed", "3", "--n-starts", "40",
               "--out-dir", str(tmp_path / "fit")])
    capsys.readouterr()
    assert rc == 0
    payload = _read_json(tmp_path / "fit" / "fit_report.json")["fit"]
    assert payload["converged"]
    for name, truth in true.items():
        rec = payload["intervals"][name]
        est, se = rec["estimate"], rec["se"]
        if name in LOG_SCALE:
            # se on the natural scale is est * se_log (delta method)
            assert abs(math.log(truth) - math.log(est)) <= 3.0 * se / est, name
        else:
            assert abs(truth - est) <= 3.0 * se, name


# -- remaining subcommands ---------------------------------------------------

@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("clisim")
    rc = main(["simulate", "--baseline", "--theta", "30,20000,0.05,40,2,25",
               "--length", "110", "--seed", "61", "--out-dir", str(out)])
    assert rc == 0
    return str(out / "simulated.csv")


def test_forecast_bands(tmp_path, sim_csv, capsys):
    rc = main(["forecast", "--input", sim_csv, "--indicator", "positives",
               "--baseline", "--seed", "5", "--n-starts", "15",
               "--horizon", "7", "-B", "150", "--out-dir", str(tmp_path)])
    capsys.readouterr()
    assert rc == 0
    for name in ("forecast_daily.csv", "forecast_cumulative.csv"):
        with open(tmp_path / name) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 110 + 7
        for r in rows:
            assert float(r["lower"]) <= float(r["upper"])
    rep = _read_json(tmp_path / "forecast_report.json")
    assert rep["horizon"] == 7 and rep["B"] == 150
    assert rep["n_rejected_draws"] >= 0


def test_peak_report(tmp_path, sim_csv, capsys):
    rc = main(["peak", "--input", sim_csv, "--indicator", "positives",
               "--baseline", "--seed", "5", "--n-starts", "15",
               "-B", "150", "--out-dir", str(tmp_path)])
    capsys.readouterr()
    assert rc == 0
    rep = _read_json(tmp_path / "peak_report.json")
    assert rep["lower_date"] <= rep["peak_date"] <= rep["upper_date"]
    assert rep["width_days"] >= 0.0
    # generator peaks near day 40 + log10(2)/0.05 ~ 46 -> mid-February
    assert rep["peak_date"].startswith("2020-02")


def test_diagnose_outputs(tmp_path, sim_csv, capsys):
    rc = main(["diagnose", "--input", sim_csv, "--indicator", "positives",
               "--baseline", "--seed", "5", "--n-starts", "15",
               "-B", "150", "--out-dir", str(tmp_path)])
    capsys.readouterr()
    assert rc == 0
    rep = _read_json(tmp_path / "diagnostics.json")
    assert 0.0 < rep["pseudo_r2"] <= 1.0
    assert 0.5 <= rep["coverage"] <= 1.0
    assert "7" in rep["acf"]
    with open(tmp_path / "residuals.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 110
    assert set(rows[0]) == {"date", "observed", "fitted", "pearson_residual"}


def test_backtest_grid_outputs(tmp_path, sim_csv, capsys):
    rc = main(["backtest", "--mode", "grid", "--input", sim_csv,
               "--indicator", "positives", "--baseline",
               "--window-ends", "60,80", "--horizons", "1,5",
               "--seed", "5", "--n-starts", "12", "--out-dir", str(tmp_path)])
    capsys.readouterr()
    assert rc == 0
    with open(tmp_path / "backtest_grid.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert all(float(r["rmspe"]) >= 0.0 for r in rows)
    rep = _read_json(tmp_path / "backtest_grid.json")
    assert len(rep["grid"]) == 4
