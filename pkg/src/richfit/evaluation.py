"""Backtesting: rolling-origin RMSPE grids and peak anticipation."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .estimator import FitConfig, NonConvergenceError, fit
from .model import ModelSpec, mean_daily
from .series import CountSeries
from .uncertainty import draw_ensemble, peak_interval

__all__ = ["BacktestGrid", "PeakBacktest", "rmspe", "backtest_grid",
           "smoothed_true_peak", "peak_backtest"]


@dataclass(frozen=True)
class BacktestGrid:
    window_ends: list                    # series lengths t_tilde
    horizons: list
    rmspe: np.ndarray                    # (len(window_ends), len(horizons))
    converged: np.ndarray                # same shape, bool
    end_dates: list = field(default_factory=list)

    def cell(self, window_end: int, horizon: int) -> float:
        i = self.window_ends.index(window_end)
        j = self.horizons.index(horizon)
        return float(self.rmspe[i, j])

    def rows(self) -> list:
        out = []
        for i, te in enumerate(self.window_ends):
            for j, k in enumerate(self.horizons):
                out.append({
                    "window_end": te,
                    "end_date": (self.end_dates[i].isoformat()
                                 if self.end_dates else None),
                    "horizon": k,
                    "rmspe": float(self.rmspe[i, j]),
                    "converged": bool(self.converged[i, j]),
                })
        return out


@dataclass(frozen=True)
class PeakBacktest:
    true_peak_date: dt.date
    smoother: str
    rows: list                           # per offset: delay, width, CI, flags


def rmspe(y_future, yhat_future) -> float:
    """sqrt(mean squared prediction error) over a forecast horizon."""
    y = np.asarray(y_future, dtype=float)
    yhat = np.asarray(yhat_future, dtype=float)
    if y.shape != yhat.shape or y.size < 1:
        raise ValueError("forecast and truth must have equal positive length")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def backtest_grid(y: CountSeries, spec: ModelSpec, cfg: FitConfig,
                  window_ends, horizons) -> BacktestGrid:
    """Fit on [1, t~] and score K-step-ahead forecasts against truth.

    Later windows warm-start from the previous optimum on top of fresh
    multistarts, which keeps the grid cheap without losing the global
    search.
    """
    window_ends = sorted(int(w) for w in window_ends)
    horizons = sorted(int(k) for k in horizons)
    if window_ends[0] < 8:
        raise ValueError("window too short to fit")
    if window_ends[-1] + max(horizons) > len(y):
        raise ValueError("window end + horizon exceeds the series")
    grid = np.full((len(window_ends), len(horizons)), np.nan)
    conv = np.zeros_like(grid, dtype=bool)
    warm = ()
    for i, te in enumerate(window_ends):
        sub = y.window(te)
        cell_cfg = FitConfig(
            n_starts=cfg.n_starts, ga=cfg.ga,
            newton_max_iter=cfg.newton_max_iter, grad_tol=cfg.grad_tol,
            n_polish=cfg.n_polish, bounds=cfg.bounds,
            seed=cfg.seed + te, warm_starts=warm,
        )
        try:
            res = fit(sub, spec, cell_cfg)
        except (NonConvergenceError, ValueError):
            continue
        warm = (res.v,)
        future_times = np.arange(te + 1, te + max(horizons) + 1, dtype=float)
        yhat = mean_daily(spec, res.theta, future_times)
        for j, k in enumerate(horizons):
            grid[i, j] = rmspe(y.values[te:te + k], yhat[:k])
            conv[i, j] = res.converged
    return BacktestGrid(
        window_ends=window_ends, horizons=horizons, rmspe=grid,
        converged=conv,
        end_dates=[y.date_for_time(te) for te in window_ends],
    )


def smoothed_true_peak(y: CountSeries, window: int = 7):
    """Date of the maximum of a centered moving average of the counts.

    Ties break to the earliest date.  Returns (date, index, label).
    """
    if len(y) < 15:
        raise ValueError("need at least 15 observations")
    if window % 2 == 0 or window < 3:
        raise ValueError("window must be an odd integer >= 3")
    kernel = np.ones(window) / window
    sm = np.convolve(y.values, kernel, mode="valid")
    half = window // 2
    idx = half + int(np.argmax(sm))
    n_max = int(np.sum(sm == sm.max()))
    label = f"centered-{window}-day-moving-average"
    if n_max > 1:
        import logging
        logging.getLogger(__name__).warning(
            "%d equal smoothed maxima; earliest date used", n_max)
    return y.dates[idx], idx, label


def peak_backtest(y: CountSeries, spec: ModelSpec, cfg: FitConfig,
                  offsets=(15, 10, 5, 3, 2, 1), B: int = 2000,
                  smoother_window: int = 7) -> PeakBacktest:
    """Refit near the peak and score the anticipated peak-day estimate.

    For each offset K the model (without covariates) is fitted on data up
    to K days before the smoothed observed peak; the signed delay of the
    analytic peak estimate and its bootstrap CI width are reported.
    """
    if spec.covariates is not None:
        spec = ModelSpec(family=spec.family, baseline=spec.baseline)
    true_date, true_idx, label = smoothed_true_peak(y, window=smoother_window)
    true_time = true_idx + 1
    rows = []
    for k in sorted(offsets, reverse=True):
        te = true_time - k
        row = {"offset": int(k), "window_end": int(te), "converged": False,
               "delay_days": None, "width_days": None, "ci": None,
               "covers_true_peak": None, "reliability_warning": False}
        try:
            sub = y.window(te)
            res = fit(sub, spec, FitConfig(
                n_starts=cfg.n_starts, ga=cfg.ga,
                newton_max_iter=cfg.newton_max_iter, grad_tol=cfg.grad_tol,
                n_polish=cfg.n_polish, bounds=cfg.bounds, seed=cfg.seed + k,
            ))
            ens = draw_ensemble(res, B=B, seed=cfg.seed + 1000 + k)
            est = peak_interval(ens)
        except (NonConvergenceError, ValueError, RuntimeError):
            rows.append(row)
            continue
        row.update({
            "converged": True,
            "delay_days": float(est.point - true_time),
            "width_days": float(est.upper - est.lower),
            "ci": [est.date_lower.isoformat(), est.date_upper.isoformat()],
            "peak_date": est.date.isoformat(),
            "covers_true_peak": bool(est.lower <= true_time <= est.upper),
            "reliability_warning": not est.reliable,
        })
        rows.append(row)
    return PeakBacktest(true_peak_date=true_date, smoother=label, rows=rows)
