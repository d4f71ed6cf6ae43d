"""Poisson and Negative Binomial log-likelihoods with analytic derivatives.

Both likelihoods include their normalizing constants (log y!, log-Gamma
terms) so information criteria are comparable across families.  The NB
dispersion ``nu`` gives variance ``mu + mu**2 / nu``; ``nu -> inf``
recovers the Poisson.

Derivatives are assembled on the constrained scale from the mean-function
derivatives in :mod:`richfit.model`; optimizer-facing versions are pulled
back to the unconstrained (log) scale by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special as sp

from .model import (ModelSpec, ParamLayout, get_layout, mean_daily,
                    mean_gradient, mean_hessian)
from .series import CountSeries

__all__ = [
    "Family", "LikelihoodEvaluation", "loglik", "loglik_gradient",
    "loglik_hessian", "digamma", "trigamma", "sample_counts",
    "pearson_residuals",
]


class LikelihoodDomainError(ValueError):
    """Raised when the mean function or data leave the likelihood domain."""


@dataclass(frozen=True)
class Family:
    """Count distribution family; nu is the NB dispersion (> 0)."""

    kind: str
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in ("poisson", "negbin"):
            raise ValueError(f"unknown family {self.kind!r}")
        if self.kind == "negbin":
            if self.nu is None or not np.isfinite(self.nu) or self.nu <= 0:
                raise ValueError(f"negbin requires finite nu > 0, got {self.nu}")


@dataclass(frozen=True)
class LikelihoodEvaluation:
    loglik: float
    gradient: np.ndarray
    hessian: np.ndarray


def digamma(x):
    """psi(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise LikelihoodDomainError("digamma requires x > 0")
    return sp.digamma(x)


def trigamma(x):
    """psi'(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise LikelihoodDomainError("trigamma requires x > 0")
    return sp.polygamma(1, x)


def _check_inputs(y: np.ndarray, mu: np.ndarray):
    if np.any(y < 0):
        raise LikelihoodDomainError("counts must be non-negative")
    if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
        raise LikelihoodDomainError("mean function must be strictly positive")


def _poisson_ll(y, mu):
    return float(np.sum(y * np.log(mu) - mu - sp.gammaln(y + 1.0)))


def _gammaln_ratio(y, nu):
    """log Gamma(nu + y) - log Gamma(nu), stable for huge nu.

    Direct subtraction loses ~eps * nu * log(nu) of absolute precision,
    which the optimizer can exploit as spurious likelihood once nu grows
    past ~1e10; the Stirling-series difference keeps full precision
    there (truncation error below 1/(360 nu^3)).
    """
    if nu < 1e8:
        return sp.gammaln(nu + y) - sp.gammaln(nu)
    t = np.log1p(y / nu)
    return ((nu - 0.5) * t + y * (np.log(nu) + t) - y
            + (1.0 / (nu + y) - 1.0 / nu) / 12.0)


def _negbin_ll(y, mu, nu):
    return float(np.sum(
        _gammaln_ratio(y, nu) - sp.gammaln(y + 1.0)
        - nu * np.log1p(mu / nu)
        + y * (np.log(mu) - np.log(nu + mu))
    ))


def loglik(y: CountSeries, spec: ModelSpec, theta: np.ndarray) -> float:
    """Log-likelihood of the daily counts under the spec at theta."""
    obs = y.values
    mu = mean_daily(spec, theta, y.times)
    _check_inputs(obs, mu)
    if spec.family == "poisson":
        return _poisson_ll(obs, mu)
    nu = get_layout(spec).nu(theta)
    return _negbin_ll(obs, mu, nu)


def loglik_gradient(y: CountSeries, spec: ModelSpec, theta: np.ndarray) -> np.ndarray:
    """Score vector over the free parameters (constrained scale)."""
    layout = get_layout(spec)
    obs = y.values
    mu = mean_daily(spec, theta, y.times)
    _check_inputs(obs, mu)
    G = mean_gradient(spec, theta, y.times)
    if spec.family == "poisson":
        c1 = obs / mu - 1.0
        return c1 @ G
    nu = layout.nu(theta)
    c1 = obs / mu - (obs + nu) / (mu + nu)
    grad = c1 @ G
    T = obs.size
    grad[layout.index["nu"]] = (
        T * (np.log(nu) - sp.digamma(nu))
        + np.sum(sp.digamma(nu + obs) - np.log(mu + nu) + (mu - obs) / (mu + nu))
    )
    return grad


def loglik_hessian(y: CountSeries, spec: ModelSpec, theta: np.ndarray) -> np.ndarray:
    """Hessian over the free parameters (constrained scale)."""
    layout = get_layout(spec)
    obs = y.values
    mu = mean_daily(spec, theta, y.times)
    _check_inputs(obs, mu)
    G = mean_gradient(spec, theta, y.times)
    Hmu = mean_hessian(spec, theta, y.times)
    if spec.family == "poisson":
        c1 = obs / mu - 1.0
        c2 = -obs / mu**2
        H = (G * c2[:, None]).T @ G + np.einsum("t,tij->ij", c1, Hmu)
        return 0.5 * (H + H.T)

    nu = layout.nu(theta)
    c1 = obs / mu - (obs + nu) / (mu + nu)
    c2 = (obs + nu) / (mu + nu) ** 2 - obs / mu**2
    H = (G * c2[:, None]).T @ G + np.einsum("t,tij->ij", c1, Hmu)
    j = layout.index["nu"]
    T = obs.size
    H[j, :] = H[:, j] = (obs - mu) / (mu + nu) ** 2 @ G
    H[j, j] = (
        T * (1.0 / nu - sp.polygamma(1, nu))
        + np.sum(sp.polygamma(1, nu + obs) - 1.0 / (mu + nu)
                 - (mu - obs) / (mu + nu) ** 2)
    )
    return 0.5 * (H + H.T)


def evaluate(y: CountSeries, spec: ModelSpec, theta: np.ndarray) -> LikelihoodEvaluation:
    """Fused loglik + gradient + Hessian sharing the mean-function work."""
    layout = get_layout(spec)
    obs = y.values
    times = y.times
    mu = mean_daily(spec, theta, times)
    _check_inputs(obs, mu)
    G = mean_gradient(spec, theta, times)
    Hmu = mean_hessian(spec, theta, times)
    T = obs.size
    if spec.family == "poisson":
        ll = _poisson_ll(obs, mu)
        c1 = obs / mu - 1.0
        c2 = -obs / mu**2
        grad = c1 @ G
        H = (G * c2[:, None]).T @ G + np.einsum("t,tij->ij", c1, Hmu)
    else:
        nu = layout.nu(theta)
        ll = _negbin_ll(obs, mu, nu)
        c1 = obs / mu - (obs + nu) / (mu + nu)
        c2 = (obs + nu) / (mu + nu) ** 2 - obs / mu**2
        grad = c1 @ G
        j = layout.index["nu"]
        grad[j] = (
            T * (np.log(nu) - sp.digamma(nu))
            + np.sum(sp.digamma(nu + obs) - np.log(mu + nu)
                     + (mu - obs) / (mu + nu))
        )
        H = (G * c2[:, None]).T @ G + np.einsum("t,tij->ij", c1, Hmu)
        H[j, :] = H[:, j] = (obs - mu) / (mu + nu) ** 2 @ G
        H[j, j] = (
            T * (1.0 / nu - sp.polygamma(1, nu))
            + np.sum(sp.polygamma(1, nu + obs) - 1.0 / (mu + nu)
                     - (mu - obs) / (mu + nu) ** 2)
        )
    return LikelihoodEvaluation(loglik=ll, gradient=grad,
                                hessian=0.5 * (H + H.T))


def sample_counts(spec: ModelSpec, theta: np.ndarray, T: int, seed,
                  start_date=None, indicator: str = "simulated") -> CountSeries:
    """Simulate an independent count series of length T from the model.

    NB draws use the exact Gamma-Poisson mixture, valid for real nu.
    """
    import datetime as dt

    rng = np.random.default_rng(seed)
    times = np.arange(1, T + 1, dtype=float)
    mu = mean_daily(spec, theta, times)
    if np.any(mu <= 0):
        raise LikelihoodDomainError("mean function must be positive to sample")
    if spec.family == "poisson":
        vals = rng.poisson(mu)
    else:
        nu = get_layout(spec).nu(theta)
        lam = rng.gamma(shape=nu, scale=mu / nu)
        vals = rng.poisson(lam)
    if start_date is None:
        start_date = dt.date(2020, 1, 1)
    return CountSeries(start_date=start_date, values=vals.astype(float),
                       indicator=indicator)


def pearson_residuals(y, fitted, family: Family) -> np.ndarray:
    """(y - yhat) / sqrt(Var[Y]); Var = yhat (Poisson) or yhat + yhat^2/nu."""
    obs = y.values if isinstance(y, CountSeries) else np.asarray(y, dtype=float)
    yhat = np.asarray(getattr(fitted, "values", fitted), dtype=float)
    if obs.shape != yhat.shape:
        raise ValueError("observed and fitted lengths differ")
    if np.any(yhat <= 0):
        raise LikelihoodDomainError("fitted values must be strictly positive")
    if family.kind == "poisson":
        var = yhat
    else:
        var = yhat + yhat**2 / family.nu
    return (obs - yhat) / np.sqrt(var)
