"""Maximum-likelihood fitting of Richards count-regression models.

Strategy: Latin-hypercube multistart inside per-parameter boxes,
optional genetic refinement, then damped Newton polish of the best
starts on the unconstrained (log) scale using the analytic gradient and
Hessian.  The observed Fisher information at the optimum provides the
covariance for Wald intervals and the bootstrap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import likelihoods as lk
from .model import ModelSpec, ParamLayout, get_layout
from .series import CountSeries

logger = logging.getLogger(__name__)

__all__ = [
    "FitConfig", "GaConfig", "FitResult", "fit", "observed_information",
    "parameter_intervals", "information_criteria", "compare_models",
    "InsufficientDataError", "NonConvergenceError",
]


class InsufficientDataError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, best_theta=None, best_loglik=None):
        super().__init__(msg)
        self.best_theta = best_theta
        self.best_loglik = best_loglik


@dataclass(frozen=True)
class GaConfig:
    """Generational refinement of the start population."""

    population: int = 40
    generations: int = 10
    mutation_scale: float = 0.2
    tournament: int = 3


@dataclass(frozen=True)
class FitConfig:
    n_starts: int = 50
    ga: GaConfig | None = None
    newton_max_iter: int = 200
    grad_tol: float = 1e-8
    n_polish: int | None = None          # default: top decile, at least 4
    bounds: dict = field(default_factory=dict)
    seed: int = 0
    warm_starts: tuple = ()              # unconstrained vectors to polish too

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.grad_tol <= 0 or self.newton_max_iter < 1:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    names: list
    theta: np.ndarray                    # constrained scale
    v: np.ndarray                        # unconstrained scale
    loglik: float
    cov_unconstrained: np.ndarray
    cov_constrained: np.ndarray
    aic: float
    aicc: float | None
    bic: float
    n_params: int
    n_obs: int
    converged: bool
    grad_norm: float
    hessian_nd: bool                     # negative definite at the optimum
    degenerate_cov: bool
    start_spread: float                  # best - runner-up polished loglik
    y: CountSeries | None = None

    def param(self, name: str) -> float:
        return float(self.theta[self.names.index(name)])

    def se(self, name: str) -> float:
        i = self.names.index(name)
        return float(np.sqrt(max(self.cov_constrained[i, i], 0.0)))

    def summary(self) -> dict:
        out = {
            "loglik": self.loglik, "aic": self.aic, "aicc": self.aicc,
            "bic": self.bic, "converged": self.converged,
            "grad_norm": self.grad_norm, "n_params": self.n_params,
            "n_obs": self.n_obs,
        }
        out["estimates"] = {n: self.param(n) for n in self.names}
        out["std_errors"] = {n: self.se(n) for n in self.names}
        return out


# ---------------------------------------------------------------------------
# start sampling


def _default_boxes(y: CountSeries, spec: ModelSpec, layout: ParamLayout) -> dict:
    total = max(float(np.sum(y.values)), 1.0)
    max_daily = max(float(np.max(y.values)), 1.0)
    T = len(y)
    boxes = {
        "r": (total / 10.0, total * 10.0),
        "h": (1e-3, 0.5),
        "p": (-float(T), 2.0 * float(T)),
        "s": (1e-2, 500.0),
        "alpha": (1e-2, max_daily),
        "nu": (0.5, 500.0),
    }
    for name in layout.names:
        if name.startswith("beta"):
            if name == "beta0" and spec.covariates == "multiplicative":
                boxes[name] = (np.log(total / 10.0), np.log(total * 10.0))
            elif name == "beta0":
                boxes[name] = (np.log(1e-2), np.log(max_daily))
            else:
                boxes[name] = (-2.0, 2.0)
    return boxes


def _sample_starts(y, spec, layout, cfg) -> np.ndarray:
    """Unconstrained-scale start vectors (n_starts, n)."""
    boxes = _default_boxes(y, spec, layout)
    boxes.update(cfg.bounds)
    lo = np.empty(layout.n)
    hi = np.empty(layout.n)
    for i, name in enumerate(layout.names):
        a, b = boxes[name]
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ValueError(f"invalid bounds for {name}: {(a, b)}")
        if layout.log_mask[i]:
            a, b = np.log(a), np.log(b)   # log-uniform for positive params
        lo[i], hi[i] = a, b
    sampler = qmc.LatinHypercube(d=layout.n, seed=cfg.seed)
    u = sampler.random(cfg.n_starts)
    return lo + u * (hi - lo)


# ---------------------------------------------------------------------------
# objective on the unconstrained scale


class _Objective:
    # log-scale components beyond this leave float-safe territory, where
    # the likelihood can overflow into finite garbage
    V_CAP = 50.0

    def __init__(self, y: CountSeries, spec: ModelSpec, layout: ParamLayout):
        self.y, self.spec, self.layout = y, spec, layout

    def _out_of_range(self, v) -> bool:
        return bool(np.any(np.abs(v[self.layout.log_mask]) > self.V_CAP))

    def value(self, v) -> float:
        if self._out_of_range(v):
            return -np.inf
        try:
            theta = self.layout.from_unconstrained(v)
            if not np.all(np.isfinite(theta)):
                return -np.inf
            ll = lk.loglik(self.y, self.spec, theta)
        except (lk.LikelihoodDomainError, FloatingPointError, ValueError):
            return -np.inf
        # a sum of log-pmf terms is strictly negative; anything else is
        # numerical breakdown
        return ll if ll < 0.0 else -np.inf

    def value_grad_hess(self, v):
        if self._out_of_range(v):
            raise lk.LikelihoodDomainError("parameter out of float-safe range")
        theta = self.layout.from_unconstrained(v)
        ev = lk.evaluate(self.y, self.spec, theta)
        if not ev.loglik < 0.0:
            raise lk.LikelihoodDomainError("log-likelihood numerically invalid")
        g = self.layout.pullback_gradient(ev.gradient, theta)
        H = self.layout.pullback_hessian(ev.hessian, ev.gradient, theta)
        return ev.loglik, g, H


def _stalled_ok(gnorm: float, ll: float, cfg: FitConfig) -> bool:
    """Scale-relative sanity bound for numerically converged stalls.

    A stall means no damping level and no step length yields an ascent
    beyond floating-point resolution; on flat likelihood ridges this
    happens with a small but nonzero residual gradient.
    """
    return gnorm < max(cfg.grad_tol, 1e-3 * max(1.0, abs(ll)))


def _ridge_step(H, g, tau, D):
    try:
        c = np.linalg.cholesky(-H + tau * D)
        return np.linalg.solve(c.T, np.linalg.solve(c, g))
    except np.linalg.LinAlgError:
        return None


def _newton_polish(obj: _Objective, v0, cfg: FitConfig):
    """Damped Newton ascent; returns (v, loglik, grad_norm, converged)."""
    v = np.asarray(v0, dtype=float).copy()
    ll = obj.value(v)
    if not np.isfinite(ll):
        return v, -np.inf, np.inf, False
    gnorm = np.inf
    for _ in range(cfg.newton_max_iter):
        try:
            ll, g, H = obj.value_grad_hess(v)
        except (lk.LikelihoodDomainError, ValueError):
            return v, ll, gnorm, False
        gnorm = float(np.max(np.abs(g)))
        if gnorm < cfg.grad_tol:
            return v, ll, gnorm, True
        if not np.all(np.isfinite(H)):
            return v, ll, gnorm, False
        hnorm = max(float(np.max(np.abs(H))), 1.0)
        # diagonal-scaled ridge ladder: start from a pure Newton step,
        # escalate damping when the factorization or line search fails
        D = np.diag(np.maximum(np.abs(np.diag(H)), 1e-6 * hnorm))
        tau = 0.0
        improved = False
        for _ in range(60):
            step = _ridge_step(H, g, tau, D)
            if step is None or not np.all(np.isfinite(step)):
                tau = 1e-8 * hnorm if tau == 0.0 else 2.0 * tau
                continue
            slope = float(g @ step)
            eta = 1.0
            for _ in range(30):
                cand = v + eta * step
                ll_new = obj.value(cand)
                if np.isfinite(ll_new) and ll_new >= ll + 1e-4 * eta * slope:
                    v, ll = cand, ll_new
                    improved = True
                    break
                eta *= 0.5
            if improved:
                break
            tau = 1e-8 * hnorm if tau == 0.0 else 4.0 * tau
            if tau > 1e8 * hnorm:
                break
        if not improved:
            return v, ll, gnorm, _stalled_ok(gnorm, ll, cfg)
    return v, ll, gnorm, gnorm < cfg.grad_tol or _stalled_ok(gnorm, ll, cfg)


def _ga_refine(obj: _Objective, starts, scores, ga: GaConfig, rng) -> np.ndarray:
    """Tournament selection with Gaussian mutation over the start pool."""
    pool = starts.copy()
    fit_scores = scores.copy()
    scale = ga.mutation_scale * np.maximum(np.std(pool, axis=0), 1e-3)
    for _ in range(ga.generations):
        children = np.empty_like(pool)
        for i in range(pool.shape[0]):
            idx = rng.integers(0, pool.shape[0], size=ga.tournament)
            parent = pool[idx[np.argmax(fit_scores[idx])]]
            children[i] = parent + rng.normal(0.0, scale)
        child_scores = np.array([obj.value(c) for c in children])
        better = child_scores > fit_scores
        pool[better] = children[better]
        fit_scores[better] = child_scores[better]
    return pool, fit_scores


# ---------------------------------------------------------------------------
# public operations


def fit(y: CountSeries, spec: ModelSpec, cfg: FitConfig | None = None) -> FitResult:
    cfg = cfg or FitConfig()
    layout = get_layout(spec)
    T = len(y)
    if T <= layout.n + 2:
        raise InsufficientDataError(
            f"series length {T} too short for {layout.n} free parameters"
        )
    if np.all(y.values == 0):
        raise InsufficientDataError("series is identically zero")

    obj = _Objective(y, spec, layout)
    starts = _sample_starts(y, spec, layout, cfg)
    scores = np.array([obj.value(v) for v in starts])
    if cfg.ga is not None:
        rng = np.random.default_rng(cfg.seed + 1)
        starts, scores = _ga_refine(obj, starts, scores, cfg.ga, rng)

    n_polish = cfg.n_polish or max(4, cfg.n_starts // 10)
    order = np.argsort(scores)[::-1]
    candidates = [np.asarray(w, dtype=float) for w in cfg.warm_starts]
    candidates += [starts[i] for i in order if np.isfinite(scores[i])]
    if not candidates:
        raise NonConvergenceError("no start produced a finite log-likelihood")

    # polish the top candidates in score order; if none converge, keep
    # working down the list rather than giving up on an unlucky draw
    polished = []
    for n_done, v0 in enumerate(candidates, start=1):
        v, ll, gnorm, conv = _newton_polish(obj, v0, cfg)
        if np.isfinite(ll):
            polished.append((ll, v, gnorm, conv))
        if n_done >= n_polish and polished:
            best_ll = max(rec[0] for rec in polished)
            if any(c and best_ll - l2 < 1e-2 for l2, _, _, c in polished):
                break
    if not polished:
        raise NonConvergenceError("all Newton polishes failed")
    polished.sort(key=lambda rec: rec[0], reverse=True)
    ll, v, gnorm, conv = polished[0]
    spread = ll - polished[1][0] if len(polished) > 1 else 0.0
    if not conv:
        # on flat ridges several polishes land on numerically equal optima;
        # prefer one holding a convergence certificate
        for ll2, v2, gn2, c2 in polished[1:]:
            if c2 and ll - ll2 < 1e-2:
                ll, v, gnorm, conv = ll2, v2, gn2, c2
                break
    if not conv:
        theta_best = layout.from_unconstrained(v)
        raise NonConvergenceError(
            f"best start did not converge (grad inf-norm {gnorm:.3g})",
            best_theta=theta_best, best_loglik=ll,
        )
    ties = [(l2, v2, g2) for l2, v2, g2, c2 in polished
            if c2 and ll - l2 < 1e-2]
    if len(ties) > 1:
        # a flat likelihood ridge can hold numerically equal optima whose
        # observed information ranges from well-conditioned to singular;
        # report the best-conditioned tie so the Wald covariance stays
        # meaningful (the log-likelihood changes by < 1e-2 at most)
        def _conditioning(rec):
            try:
                _, _, Hc = obj.value_grad_hess(rec[1])
            except lk.LikelihoodDomainError:
                return -np.inf
            w = np.linalg.eigvalsh(-Hc)
            return float(w[0] / max(w[-1], np.finfo(float).tiny))
        ll, v, gnorm = max(ties, key=_conditioning)

    theta = layout.from_unconstrained(v)
    _, _, H = obj.value_grad_hess(v)
    cov_u, hess_nd, degenerate = _invert_information(H)
    jac = np.where(layout.log_mask, theta, 1.0)
    cov_c = cov_u * np.outer(jac, jac)

    k = layout.n
    ics = information_criteria(ll, k, T)
    return FitResult(
        spec=spec, names=list(layout.names), theta=theta, v=v, loglik=ll,
        cov_unconstrained=cov_u, cov_constrained=cov_c,
        aic=ics["AIC"], aicc=ics["AICc"], bic=ics["BIC"],
        n_params=k, n_obs=T, converged=conv, grad_norm=gnorm,
        hessian_nd=hess_nd, degenerate_cov=degenerate,
        start_spread=float(abs(spread)), y=y,
    )


def _invert_information(H: np.ndarray):
    """V = -H^{-1}; eigen pseudo-inverse fallback when H is not ND."""
    A = -H
    try:
        c = np.linalg.cholesky(A)
        inv_c = np.linalg.inv(c)
        return inv_c.T @ inv_c, True, False
    except np.linalg.LinAlgError:
        logger.warning("Hessian not negative definite; clamped-eigenvalue fallback")
        w, Q = np.linalg.eigh(A)
        # directions with non-positive curvature are unidentified at float
        # resolution; clamp to a tiny curvature so they get a huge (not
        # zero) variance, which is the honest Wald statement
        floor = 1e-12 * max(float(np.max(np.abs(w))), 1.0)
        w_inv = 1.0 / np.maximum(w, floor)
        return (Q * w_inv) @ Q.T, False, True


def observed_information(fit_result: FitResult) -> np.ndarray:
    """Covariance of the estimates (unconstrained scale), -H^{-1}."""
    return fit_result.cov_unconstrained


def parameter_intervals(fit_result: FitResult, level: float = 0.95) -> dict:
    """Wald intervals per parameter on the constrained scale.

    Intervals are formed on the unconstrained scale and mapped back
    through exp for log-scaled parameters, so positivity constraints
    hold by construction and skewness is respected; identity-scaled
    parameters get symmetric intervals.  Reported SEs are delta-method
    (constrained scale).  Degenerate covariance marks every interval
    unreliable.
    """
    from scipy.stats import norm

    z = norm.ppf(0.5 + level / 2.0)
    layout = get_layout(fit_result.spec)
    out = {}
    for i, name in enumerate(fit_result.names):
        est = float(fit_result.theta[i])
        var_u = float(fit_result.cov_unconstrained[i, i])
        se_u = np.sqrt(max(var_u, 0.0))
        se = np.sqrt(max(float(fit_result.cov_constrained[i, i]), 0.0))
        if layout.log_mask[i]:
            # work in log space and cap the exponent so hi stays finite
            arg = min(z * se_u, 700.0)
            lo = float(np.exp(np.log(est) - arg))
            hi = float(np.exp(min(np.log(est) + arg, 709.0)))
        else:
            lo, hi = est - z * se_u, est + z * se_u
        out[name] = {
            "estimate": est, "lower": lo, "upper": hi, "se": se,
            "reliable": not fit_result.degenerate_cov and se > 0,
        }
    return out


def information_criteria(loglik: float, k: int, T: int) -> dict:
    """AIC = 2k - 2l; AICc adds 2k(k+1)/(T-k-1); BIC = k log T - 2l."""
    aic = 2.0 * k - 2.0 * loglik
    bic = k * np.log(T) - 2.0 * loglik if T > 0 else -2.0 * loglik
    aicc = aic + 2.0 * k * (k + 1) / (T - k - 1) if T > k + 1 else None
    return {"AIC": aic, "AICc": aicc, "BIC": float(bic)}


def compare_models(fits: list) -> list:
    """Rank fits on the same data by AIC (ties: BIC, then k)."""
    n_obs = {f.n_obs for f in fits}
    if len(n_obs) != 1:
        raise ValueError("fits compare different data lengths")
    ranked = sorted(fits, key=lambda f: (f.aic, f.bic, f.n_params))
    best_aic = ranked[0].aic
    return [
        {
            "rank": i + 1,
            "family": f.spec.family,
            "baseline": f.spec.baseline,
            "covariates": f.spec.covariates,
            "k": f.n_params,
            "loglik": f.loglik,
            "aic": f.aic,
            "delta_aic": f.aic - best_aic,
            "bic": f.bic,
        }
        for i, f in enumerate(ranked)
    ]
