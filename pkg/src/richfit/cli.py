"""Batch command-line front end.

Subcommands: fit, forecast, peak, diagnose, backtest, simulate.  Each
run emits machine-readable JSON reports (embedding the input file hash,
the effective configuration, the seed and the library version) plus
plot-ready CSVs.  Exit codes: 0 success, 2 usage error, 3 data error,
4 non-convergence; errors are also written as structured JSON to
stderr.  The env var RICHFIT_THREADS caps internal parallelism; an
optional ``key=value`` config file mirrors the flags (flags win).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (SchemaError, RowError, bundled_snapshot_path, extract_series,
                   merge_autonomous_provinces, parse_dpc, weekday_design)
from .diagnostics import (acf, empirical_coverage, normality_test, pseudo_r2,
                          weekday_residual_summary)
from .estimator import (FitConfig, InsufficientDataError, NonConvergenceError,
                        fit, parameter_intervals)
from .evaluation import backtest_grid, peak_backtest
from .likelihoods import Family, LikelihoodDomainError, sample_counts
from .model import ModelSpec, SpecError, mean_daily
from .series import CountSeries
from .uncertainty import (DegenerateCovarianceError, cumulative_band,
                          draw_ensemble, peak_interval, prediction_band)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONV = 0, 2, 3, 4

_DATA_ERRORS = (SchemaError, RowError, InsufficientDataError,
                LikelihoodDomainError, SpecError, ValueError, OSError)
_CONV_ERRORS = (NonConvergenceError, DegenerateCovarianceError)


class UsageError(Exception):
    pass


def _apply_thread_cap():
    cap = os.environ.get("RICHFIT_THREADS")
    if not cap:
        return None
    n = str(int(cap))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, n)
    return int(n)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="richfit",
        description="Richards-curve count regression for epidemic series",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, data=True):
        p.add_argument("--config", default=None,
                       help="key=value config file mirroring the flags")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--seed", type=int, default=None)
        if data:
            p.add_argument("--input", default=None,
                           help="DPC CSV (default: bundled snapshot)")
            p.add_argument("--indicator", default=None,
                           choices=["positives", "deceased", "recovered"])
            p.add_argument("--region", default=None)

    def add_model(p):
        p.add_argument("--family", default=None, choices=["poisson", "negbin"])
        p.add_argument("--baseline", action="store_true", default=None,
                       help="include the constant baseline term")
        p.add_argument("--covariates", default=None,
                       choices=["additive", "multiplicative"])
        p.add_argument("--weekdays", default=None,
                       help="comma-separated flagged weekdays, e.g. mon,tue")
        p.add_argument("--n-starts", type=int, default=None)

    p = sub.add_parser("fit");  add_common(p); add_model(p)
    p = sub.add_parser("forecast"); add_common(p); add_model(p)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("-B", "--bootstrap", type=int, default=None, dest="B")
    p.add_argument("--level", type=float, default=None)
    p = sub.add_parser("peak"); add_common(p); add_model(p)
    p.add_argument("-B", "--bootstrap", type=int, default=None, dest="B")
    p.add_argument("--level", type=float, default=None)
    p = sub.add_parser("diagnose"); add_common(p); add_model(p)
    p.add_argument("-B", "--bootstrap", type=int, default=None, dest="B")
    p.add_argument("--level", type=float, default=None)
    p = sub.add_parser("backtest"); add_common(p); add_model(p)
    p.add_argument("--mode", default=None, choices=["grid", "peak"])
    p.add_argument("--window-ends", default=None,
                   help="comma-separated series lengths (grid mode)")
    p.add_argument("--horizons", default=None,
                   help="comma-separated forecast steps (grid mode)")
    p.add_argument("--offsets", default=None,
                   help="comma-separated days-before-peak (peak mode)")
    p.add_argument("-B", "--bootstrap", type=int, default=None, dest="B")
    p = sub.add_parser("simulate"); add_common(p, data=False); add_model(p)
    p.add_argument("--theta", default=None,
                   help="comma-separated parameter values, layout order")
    p.add_argument("--length", type=int, default=None, dest="T")
    p.add_argument("--start-date", default=None)
    return parser


_DEFAULTS = {
    "indicator": "positives", "region": None, "family": "negbin",
    "baseline": False, "covariates": None, "weekdays": "mon,tue",
    "n_starts": 40, "seed": 0, "out_dir": ".", "horizon": 14, "B": 2000,
    "level": 0.95, "mode": "grid", "T": 150, "start_date": "2020-01-01",
    "input": None, "theta": None, "window_ends": None, "horizons": "1,5",
    "offsets": "10,5,2,1",
}

_CASTS = {"seed": int, "n_starts": int, "horizon": int, "B": int,
          "level": float, "T": int,
          "baseline": lambda s: str(s).lower() in ("1", "true", "yes", "on")}


def _effective(args) -> dict:
    """Flag value if given, else config-file value, else default."""
    file_cfg = _read_config_file(args.config) if getattr(args, "config", None) else {}
    eff = {}
    for key, default in _DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            eff[key] = flag
        elif key in file_cfg:
            cast = _CASTS.get(key, str)
            eff[key] = cast(file_cfg[key])
        else:
            eff[key] = default
    eff["subcommand"] = args.subcommand
    return eff


def _load_series(cfg) -> tuple:
    if cfg["input"] is None:
        scope = "regional" if cfg["region"] else "national"
        path = bundled_snapshot_path(scope)
    else:
        path = Path(cfg["input"])
        scope = "regional" if cfg["region"] else "national"
    records = parse_dpc(path, scope=scope)
    if scope == "regional":
        records = merge_autonomous_provinces(records)
    y = extract_series(records, cfg["indicator"], region=cfg["region"])
    return y, path


def _model_spec(cfg, y: CountSeries) -> ModelSpec:
    if cfg["covariates"] == "additive" and cfg["baseline"]:
        raise UsageError("--baseline and --covariates additive are mutually "
                         "exclusive: the additive term replaces the baseline")
    X = None
    if cfg["covariates"] is not None:
        days = [d.strip() for d in cfg["weekdays"].split(",") if d.strip()]
        X = weekday_design(y.dates, days).X
    return ModelSpec(family=cfg["family"],
                     baseline="constant" if cfg["baseline"] else "none",
                     covariates=cfg["covariates"], X=X)


def _fit_config(cfg) -> FitConfig:
    return FitConfig(seed=cfg["seed"], n_starts=cfg["n_starts"])


def _embed(cfg, path) -> dict:
    return {
        "input_sha256": _sha256(path) if path is not None else None,
        "config": {k: v for k, v in sorted(cfg.items())},
        "seed": cfg["seed"],
        "version": __version__,
        "threads_cap": _apply_thread_cap(),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (dt.date, dt.datetime)):
        return obj.isoformat()
    return obj


def _write_json(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(out_dir: Path, name: str, header: list, rows) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _fit_payload(res, level=0.95) -> dict:
    intervals = parameter_intervals(res, level=level)
    return {
        "loglik": res.loglik, "aic": res.aic, "aicc": res.aicc, "bic": res.bic,
        "converged": res.converged, "grad_norm": res.grad_norm,
        "degenerate_covariance": res.degenerate_cov,
        "n_params": res.n_params, "n_obs": res.n_obs,
        "estimates": {n: res.param(n) for n in res.names},
        "intervals": intervals,
    }


def _run(cfg) -> list:
    out_dir = Path(cfg["out_dir"])
    written = []
    sub = cfg["subcommand"]

    if sub == "simulate":
        if cfg["theta"] is None:
            raise UsageError("simulate requires --theta")
        theta = np.array([float(x) for x in cfg["theta"].split(",")])
        spec = ModelSpec(family=cfg["family"],
                         baseline="constant" if cfg["baseline"] else "none")
        start = dt.date.fromisoformat(cfg["start_date"])
        y = sample_counts(spec, theta, cfg["T"], seed=cfg["seed"],
                          start_date=start, indicator="simulated")
        # simulated.csv uses the ingestion schema so it can feed --input
        cum = np.cumsum(y.values).astype(int)
        rows = [(d.isoformat(), int(v), 0, 0, 0, int(c))
                for d, v, c in zip(y.dates, y.values, cum)]
        written.append(_write_csv(
            out_dir, "simulated.csv",
            ["data", "nuovi_positivi", "deceduti", "dimessi_guariti",
             "terapia_intensiva", "totale_positivi"], rows))
        payload = {"report": _embed(cfg, None), "length": len(y),
                   "theta": theta.tolist()}
        written.append(_write_json(out_dir, "simulate_report.json", payload))
        return written

    y, path = _load_series(cfg)
    spec = _model_spec(cfg, y)
    fc = _fit_config(cfg)

    if sub == "backtest":
        if cfg["mode"] == "grid":
            if cfg["window_ends"] is None:
                raise UsageError("backtest --mode grid requires --window-ends")
            ends = [int(x) for x in cfg["window_ends"].split(",")]
            hors = [int(x) for x in cfg["horizons"].split(",")]
            grid = backtest_grid(y, spec, fc, ends, hors)
            rows = grid.rows()
            written.append(_write_csv(
                out_dir, "backtest_grid.csv",
                ["window_end", "end_date", "horizon", "rmspe", "converged"],
                [[r["window_end"], r["end_date"], r["horizon"],
                  r["rmspe"], r["converged"]] for r in rows]))
            payload = {"report": _embed(cfg, path), "grid": rows}
            written.append(_write_json(out_dir, "backtest_grid.json", payload))
        else:
            offsets = [int(x) for x in cfg["offsets"].split(",")]
            pb = peak_backtest(y, spec, fc, offsets=offsets, B=cfg["B"])
            written.append(_write_csv(
                out_dir, "peak_backtest.csv",
                ["offset", "window_end", "converged", "delay_days",
                 "width_days", "covers_true_peak"],
                [[r["offset"], r["window_end"], r["converged"],
                  r["delay_days"], r["width_days"], r["covers_true_peak"]]
                 for r in pb.rows]))
            payload = {"report": _embed(cfg, path),
                       "true_peak_date": pb.true_peak_date.isoformat(),
                       "smoother": pb.smoother, "rows": pb.rows}
            written.append(_write_json(out_dir, "peak_backtest.json", payload))
        return written

    res = fit(y, spec, fc)
    yhat = mean_daily(spec, res.theta, y.times)

    if sub == "fit":
        payload = {"report": _embed(cfg, path), "fit": _fit_payload(res)}
        written.append(_write_json(out_dir, "fit_report.json", payload))
        written.append(_write_csv(
            out_dir, "fitted_curve.csv", ["date", "observed", "fitted"],
            [(d.isoformat(), int(v), repr(float(m)))
             for d, v, m in zip(y.dates, y.values, yhat)]))
        return written

    if sub == "forecast":
        if (spec.covariates is not None and cfg["horizon"] > 0):
            raise UsageError("forecasting beyond the sample needs a "
                             "covariate-free model; drop --covariates")
        ens = draw_ensemble(res, B=cfg["B"], seed=cfg["seed"],
                            horizon=cfg["horizon"])
        daily = prediction_band(ens, level=cfg["level"])
        cum = cumulative_band(ens, level=cfg["level"])
        dates = [y.date_for_time(t) for t in ens.times]
        for name, band in (("forecast_daily.csv", daily),
                           ("forecast_cumulative.csv", cum)):
            written.append(_write_csv(
                out_dir, name, ["date", "point", "lower", "upper"],
                [(d.isoformat(), repr(float(p)), repr(float(lo)), repr(float(hi)))
                 for d, p, lo, hi in zip(dates, band.point,
                                         band.lower, band.upper)]))
        payload = {"report": _embed(cfg, path), "fit": _fit_payload(res),
                   "horizon": cfg["horizon"], "B": cfg["B"],
                   "level": cfg["level"], "n_rejected_draws": ens.n_rejected}
        written.append(_write_json(out_dir, "forecast_report.json", payload))
        return written

    if sub == "peak":
        ens = draw_ensemble(res, B=cfg["B"], seed=cfg["seed"])
        est = peak_interval(ens, level=cfg["level"])
        payload = {
            "report": _embed(cfg, path),
            "peak_time": est.point, "peak_date": est.date.isoformat(),
            "lower_date": est.date_lower.isoformat(),
            "upper_date": est.date_upper.isoformat(),
            "width_days": est.upper - est.lower,
            "level": cfg["level"], "B": cfg["B"], "reliable": est.reliable,
        }
        written.append(_write_json(out_dir, "peak_report.json", payload))
        return written

    if sub == "diagnose":
        from .likelihoods import pearson_residuals
        nu = res.param("nu") if spec.family == "negbin" else None
        fam = Family(spec.family, nu)
        resid = pearson_residuals(y, yhat, fam)
        coverage = None
        if not res.degenerate_cov:
            ens = draw_ensemble(res, B=cfg["B"], seed=cfg["seed"])
            coverage = empirical_coverage(y, prediction_band(ens,
                                                             level=cfg["level"]))
        corr, band95 = acf(resid, max_lag=min(20, len(y) - 2))
        payload = {
            "report": _embed(cfg, path),
            "pseudo_r2": pseudo_r2(y, yhat),
            "coverage": coverage,
            "acf": {str(k): v for k, v in corr.items()},
            "acf_significance_band": band95,
            "normality": normality_test(resid),
            "weekday_residuals": weekday_residual_summary(resid, y.dates),
        }
        written.append(_write_json(out_dir, "diagnostics.json", payload))
        written.append(_write_csv(
            out_dir, "residuals.csv",
            ["date", "observed", "fitted", "pearson_residual"],
            [(d.isoformat(), int(v), repr(float(m)), repr(float(r)))
             for d, v, m, r in zip(y.dates, y.values, yhat, resid)]))
        return written

    raise UsageError(f"unknown subcommand {sub!r}")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        cfg = _effective(args)
        files = _run(cfg)
    except UsageError as exc:
        _emit_error("usage", exc)
        return EXIT_USAGE
    except _CONV_ERRORS as exc:
        _emit_error("non-convergence", exc)
        return EXIT_NONCONV
    except _DATA_ERRORS as exc:
        _emit_error("data", exc)
        return EXIT_DATA
    for f in files:
        print(f)
    return EXIT_OK


def _emit_error(kind: str, exc: Exception):
    json.dump({"error": kind, "type": type(exc).__name__, "message": str(exc)},
              sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
