"""Goodness-of-fit and residual diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .series import CountSeries
from .uncertainty import PredictionBand

__all__ = ["DiagnosticsReport", "pseudo_r2", "empirical_coverage", "acf",
           "normality_test", "weekday_residual_summary"]

_WEEKDAYS = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]


@dataclass(frozen=True)
class DiagnosticsReport:
    r2: float
    coverage: float | None
    acf: dict
    acf_band: float
    normality: dict
    weekday_residuals: dict

    def as_dict(self) -> dict:
        return {
            "pseudo_r2": self.r2,
            "coverage_95": self.coverage,
            "acf": self.acf,
            "acf_significance_band": self.acf_band,
            "normality": self.normality,
            "weekday_residuals": self.weekday_residuals,
        }


def pseudo_r2(y, yhat) -> float:
    """1 - sum((y - yhat)^2) / sum((y - ybar)^2)."""
    y = np.asarray(getattr(y, "values", y), dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.size != yhat.size:
        raise ValueError("length mismatch between observed and fitted")
    if y.size < 2 or np.all(y == y[0]):
        raise ValueError("pseudo R^2 undefined for constant series")
    sse = float(np.sum((y - yhat) ** 2))
    sst = float(np.sum((y - np.mean(y)) ** 2))
    return 1.0 - sse / sst


def empirical_coverage(y, band: PredictionBand) -> float:
    """Fraction of observations inside [lower, upper], endpoints inclusive."""
    obs = np.asarray(getattr(y, "values", y), dtype=float)
    T = obs.size
    if band.lower.size < T:
        raise ValueError("band does not cover the observation window")
    lo, hi = band.lower[:T], band.upper[:T]
    return float(np.mean((obs >= lo) & (obs <= hi)))


def acf(residuals, max_lag: int = 20) -> tuple[dict, float]:
    """Sample autocorrelation for lags 0..max_lag and the +-1.96/sqrt(T) band."""
    x = np.asarray(residuals, dtype=float)
    T = x.size
    if max_lag >= T:
        raise ValueError(f"max_lag {max_lag} must be < series length {T}")
    xc = x - np.mean(x)
    denom = float(np.sum(xc**2))
    if denom == 0:
        raise ValueError("constant residuals")
    out = {0: 1.0}
    for k in range(1, max_lag + 1):
        out[k] = float(np.sum(xc[k:] * xc[:-k]) / denom)
    return out, 1.96 / np.sqrt(T)


def normality_test(residuals) -> dict:
    """Shapiro-Wilk for n <= 5000; Jarque-Bera fallback above, labeled."""
    x = np.asarray(residuals, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 residuals")
    if np.all(x == x[0]):
        raise ValueError("constant residuals: normality test degenerate")
    if x.size <= 5000:
        stat, p = scipy.stats.shapiro(x)
        method = "shapiro-wilk"
    else:
        stat, p = scipy.stats.jarque_bera(x)
        method = "jarque-bera"
    return {"statistic": float(stat), "p_value": float(p), "method": method}


def weekday_residual_summary(residuals, dates) -> dict:
    """Median and quartiles of residuals grouped by day of week."""
    x = np.asarray(residuals, dtype=float)
    if len(dates) != x.size:
        raise ValueError("residuals and dates lengths differ")
    out = {}
    wd = np.array([d.weekday() for d in dates])
    for j, name in enumerate(_WEEKDAYS):
        grp = x[wd == j]
        if grp.size == 0:
            continue
        q1, med, q3 = np.percentile(grp, [25, 50, 75])
        out[name] = {"n": int(grp.size), "q1": float(q1),
                     "median": float(med), "q3": float(q3)}
    return out


def report(y: CountSeries, yhat, residuals, band: PredictionBand | None = None,
           max_lag: int = 20) -> DiagnosticsReport:
    corr, acf_band = acf(residuals, max_lag=min(max_lag, len(y) - 2))
    return DiagnosticsReport(
        r2=pseudo_r2(y, yhat),
        coverage=empirical_coverage(y, band) if band is not None else None,
        acf=corr,
        acf_band=acf_band,
        normality=normality_test(residuals),
        weekday_residuals=weekday_residual_summary(residuals, y.dates),
    )
