"""Parametric double bootstrap: parameter draws, simulated paths, bands.

Parameters are drawn from N(theta_hat, V_hat) on the unconstrained
scale, mapped back, and each draw produces a mean trajectory plus one
simulated count path (the second bootstrap layer).  Pointwise quantiles
of the count paths give prediction bands; quantiles of the per-draw
analytic peak day give the peak interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import FitResult
from .growth import peak_time
from .model import ParamLayout, get_layout, mean_daily
from .series import CountSeries

__all__ = ["BootstrapEnsemble", "PredictionBand", "PeakEstimate",
           "draw_ensemble", "prediction_band", "cumulative_band",
           "peak_interval"]

DEFAULT_B = 5000

# Draws whose implied daily mean exceeds this are domain violations: the
# simulated count would overflow the Poisson sampler long before this point.
_MU_CAP = 1e12


class DegenerateCovarianceError(RuntimeError):
    pass


@dataclass(frozen=True)
class BootstrapEnsemble:
    fit: FitResult
    B: int
    seed: int
    horizon: int
    times: np.ndarray                    # model times 1..T+horizon
    thetas: np.ndarray                   # (B, n) constrained scale
    trajectories: np.ndarray             # (B, len(times)) mean paths
    count_paths: np.ndarray              # (B, len(times)) simulated counts
    n_rejected: int = 0


@dataclass(frozen=True)
class PredictionBand:
    times: np.ndarray
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    n_repaired: int = 0
    reliable: bool = True


@dataclass(frozen=True)
class PeakEstimate:
    point: float                         # model time of the peak
    lower: float
    upper: float
    draws: np.ndarray = field(repr=False, default=None)
    date: object = None
    date_lower: object = None
    date_upper: object = None
    reliable: bool = True


def _chol_psd(V: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(V)
        w = np.clip(w, 0.0, None)
        return Q * np.sqrt(w)


def draw_ensemble(fit: FitResult, B: int = DEFAULT_B, seed: int = 0,
                  horizon: int = 0) -> BootstrapEnsemble:
    """Draw B parameter sets and simulate one count path per draw.

    Replicate i uses the seed stream spawn(seed)[i], so the ensemble is
    bit-identical for fixed (fit, B, seed) regardless of scheduling.
    """
    if fit.degenerate_cov:
        raise DegenerateCovarianceError(
            "covariance is degenerate; inspect the fit convergence report"
        )
    layout = get_layout(fit.spec)
    V = fit.cov_unconstrained
    L = _chol_psd(V)
    T = fit.n_obs
    times = np.arange(1, T + horizon + 1, dtype=float)
    if (horizon > 0 and fit.spec.covariates is not None
            and fit.spec.X.shape[0] < T + horizon):
        raise ValueError(
            "design matrix too short for the requested horizon; extend X "
            "or use a covariate-free spec"
        )

    thetas = np.empty((B, layout.n))
    trajs = np.empty((B, times.size))
    counts = np.empty((B, times.size))
    n_rejected = 0
    root = np.random.SeedSequence(seed)
    children = root.spawn(B)
    for i in range(B):
        rng = np.random.default_rng(children[i])
        theta = None
        for _ in range(100):
            z = rng.standard_normal(layout.n)
            cand = layout.from_unconstrained(fit.v + L @ z)
            mu = None
            if np.all(np.isfinite(cand)):
                try:
                    mu = mean_daily(fit.spec, cand, times)
                except ValueError:
                    mu = None
            if (mu is not None and np.all(np.isfinite(mu))
                    and np.all(mu > 0) and np.all(mu < _MU_CAP)):
                theta = cand
                break
            n_rejected += 1
        if theta is None:
            theta = fit.theta
            mu = mean_daily(fit.spec, theta, times)
        thetas[i] = theta
        trajs[i] = mu
        if fit.spec.family == "poisson":
            counts[i] = rng.poisson(mu)
        else:
            nu = layout.nu(theta)
            lam = rng.gamma(shape=nu, scale=mu / nu)
            counts[i] = rng.poisson(lam)
    return BootstrapEnsemble(
        fit=fit, B=B, seed=seed, horizon=horizon, times=times,
        thetas=thetas, trajectories=trajs, count_paths=counts,
        n_rejected=n_rejected,
    )


def _band_from_paths(times, point, paths, level) -> PredictionBand:
    lo_q = (1.0 - level) / 2.0
    lower = np.quantile(paths, lo_q, axis=0)
    upper = np.quantile(paths, 1.0 - lo_q, axis=0)
    # repair rare Monte Carlo quantile crossings
    n_rep = int(np.sum(lower > upper))
    lo = np.minimum(lower, upper)
    hi = np.maximum(lower, upper)
    return PredictionBand(
        times=np.asarray(times), point=np.asarray(point),
        lower=lo, upper=hi, level=level, n_repaired=n_rep,
        reliable=paths.shape[0] >= 100,
    )


def prediction_band(ens: BootstrapEnsemble, level: float = 0.95,
                    use_count_paths: bool = True) -> PredictionBand:
    """Pointwise band over the fit window plus horizon.

    Count paths (default) give prediction intervals carrying both
    estimation and observation noise; mean trajectories give the
    narrower confidence band on the mean.
    """
    point = mean_daily(ens.fit.spec, ens.fit.theta, ens.times)
    paths = ens.count_paths if use_count_paths else ens.trajectories
    return _band_from_paths(ens.times, point, paths, level)


def cumulative_band(ens: BootstrapEnsemble, level: float = 0.95,
                    use_count_paths: bool = True,
                    start_level: float = 0.0) -> PredictionBand:
    """Band over running sums of the simulated paths."""
    point = start_level + np.cumsum(
        mean_daily(ens.fit.spec, ens.fit.theta, ens.times)
    )
    paths = ens.count_paths if use_count_paths else ens.trajectories
    return _band_from_paths(ens.times, point, start_level + np.cumsum(paths, axis=1), level)


def peak_interval(ens: BootstrapEnsemble, level: float = 0.95) -> PeakEstimate:
    """Analytic peak day of the point fit with bootstrap quantile CI."""
    layout = get_layout(ens.fit.spec)
    point = peak_time(layout.gamma(ens.fit.theta))
    draws = np.array([peak_time(layout.gamma(th)) for th in ens.thetas])
    lo_q = (1.0 - level) / 2.0
    lower = float(np.quantile(draws, lo_q))
    upper = float(np.quantile(draws, 1.0 - lo_q))
    lower = min(lower, point)
    upper = max(upper, point)
    reliable = ens.n_rejected <= 0.1 * ens.B
    est = PeakEstimate(point=float(point), lower=lower, upper=upper,
                       draws=draws, reliable=reliable)
    if ens.fit.y is not None:
        est = PeakEstimate(
            point=est.point, lower=est.lower, upper=est.upper, draws=draws,
            date=ens.fit.y.date_for_time(est.point),
            date_lower=ens.fit.y.date_for_time(est.lower),
            date_upper=ens.fit.y.date_for_time(est.upper),
            reliable=reliable,
        )
    return est
