"""Model specification and the daily mean function with its derivatives.

A :class:`ModelSpec` fixes the count family, the baseline mode and the
covariate mode, and therefore the set of free parameters.  Free
parameters are carried as a flat numpy vector ordered by
:class:`ParamLayout`; positive-constrained entries are log-transformed
on the unconstrained scale used by the optimizer.

Baseline / covariate variants of the daily mean:

* no baseline:          mu(t) = ldiff(t)
* constant baseline:    mu(t) = alpha + ldiff(t)
* additive covariates:  mu(t) = exp(x(t) @ beta) + ldiff(t)
* multiplicative:       mu(t) = alpha + exp(x(t) @ beta) * ldiff_r1(t)

where ``ldiff`` is the Richards first difference and ``ldiff_r1`` is the
same with the scale r stripped (r enters through the intercept beta0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .growth import (
    RichardsParams,
    richards_diff,
    richards_diff_gradient,
    richards_diff_hessian,
)

__all__ = ["ModelSpec", "ParamLayout", "MeanTrajectory", "mean_daily",
           "mean_gradient", "mean_hessian", "to_unconstrained",
           "from_unconstrained", "pullback_gradient", "pullback_hessian"]

# parameters living on a log scale when unconstrained
_LOG_SCALE = {"b", "r", "h", "s", "alpha", "nu"}


class SpecError(ValueError):
    """Raised for inconsistent model specifications."""


@dataclass(frozen=True)
class ModelSpec:
    """Family + baseline + covariate structure of a count model.

    family     : "poisson" or "negbin"
    baseline   : "none" or "constant"
    covariates : None, "additive" or "multiplicative"
    X          : T x (k+1) design matrix (intercept first), required
                 whenever covariates are requested
    """

    family: str = "negbin"
    baseline: str = "constant"
    covariates: str | None = None
    X: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in ("poisson", "negbin"):
            raise SpecError(f"unknown family {self.family!r}")
        if self.baseline not in ("none", "constant"):
            raise SpecError(f"unknown baseline mode {self.baseline!r}")
        if self.covariates not in (None, "additive", "multiplicative"):
            raise SpecError(f"unknown covariate mode {self.covariates!r}")
        if self.covariates == "additive" and self.baseline == "constant":
            raise SpecError(
                "additive covariates replace the constant baseline; "
                "use baseline='none'"
            )
        if self.covariates is not None:
            if self.X is None:
                raise SpecError("covariate mode requires a design matrix X")
            X = np.asarray(self.X, dtype=float)
            if X.ndim != 2:
                raise SpecError("X must be 2-dimensional")
            object.__setattr__(self, "X", X)

    @property
    def n_covariates(self) -> int:
        return 0 if self.X is None else self.X.shape[1]

    def design_rows(self, times) -> np.ndarray:
        """Rows of X for model times t (1-based)."""
        idx = np.asarray(times, dtype=int) - 1
        if idx.min() < 0 or idx.max() >= self.X.shape[0]:
            raise SpecError(
                f"design matrix has {self.X.shape[0]} rows, "
                f"requested times {times.min()}..{times.max()}"
            )
        return self.X[idx]


def get_layout(spec: "ModelSpec") -> "ParamLayout":
    """Layout for a spec, cached on the spec instance."""
    cached = spec.__dict__.get("_layout")
    if cached is None:
        cached = ParamLayout(spec)
        object.__setattr__(spec, "_layout", cached)
    return cached


class ParamLayout:
    """Ordered free-parameter map for a given spec."""

    def __init__(self, spec: ModelSpec):
        names = []
        if spec.baseline == "constant":
            names.append("alpha")
        if spec.covariates != "multiplicative":
            names.append("r")
        names += ["h", "p", "s"]
        if spec.covariates is not None:
            names += [f"beta{j}" for j in range(spec.n_covariates)]
        if spec.family == "negbin":
            names.append("nu")
        self.spec = spec
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}
        self.log_mask = np.array(
            [n in _LOG_SCALE for n in names], dtype=bool
        )

    @property
    def n(self) -> int:
        return len(self.names)

    def pack(self, **values) -> np.ndarray:
        """Build a constrained-scale parameter vector from named values."""
        vec = np.empty(self.n)
        for name, i in self.index.items():
            if name not in values:
                raise SpecError(f"missing value for parameter {name!r}")
            vec[i] = values[name]
        return vec

    def unpack(self, theta: np.ndarray) -> dict:
        return {n: float(theta[i]) for n, i in self.index.items()}

    def gamma(self, theta: np.ndarray) -> RichardsParams:
        """Richards parameters implied by theta (b = 0, r = 1 when absorbed)."""
        r = theta[self.index["r"]] if "r" in self.index else 1.0
        return RichardsParams(
            b=0.0,
            r=float(r),
            h=float(theta[self.index["h"]]),
            p=float(theta[self.index["p"]]),
            s=float(theta[self.index["s"]]),
        )

    def beta(self, theta: np.ndarray) -> np.ndarray | None:
        k = self.spec.n_covariates
        if k == 0:
            return None
        j0 = self.index["beta0"]
        return np.asarray(theta[j0:j0 + k], dtype=float)

    def nu(self, theta: np.ndarray) -> float | None:
        if "nu" not in self.index:
            return None
        return float(theta[self.index["nu"]])

    # -- reparametrization ------------------------------------------------

    def to_unconstrained(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if np.any(theta[self.log_mask] <= 0):
            bad = [n for n, m in zip(self.names, self.log_mask)
                   if m and theta[self.index[n]] <= 0]
            raise SpecError(f"non-positive value for log-scale parameters {bad}")
        v = theta.copy()
        v[self.log_mask] = np.log(theta[self.log_mask])
        return v

    def from_unconstrained(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        theta = v.copy()
        # far-out proposals may overflow to inf; callers reject them via
        # the likelihood domain check, so the overflow itself is benign
        with np.errstate(over="ignore"):
            theta[self.log_mask] = np.exp(v[self.log_mask])
        return theta

    def pullback_gradient(self, grad_c: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Gradient in unconstrained coords: multiply log-scale entries by q."""
        jac = np.where(self.log_mask, theta, 1.0)
        return grad_c * jac

    def pullback_hessian(self, hess_c, grad_c, theta) -> np.ndarray:
        """Hessian in unconstrained coords.

        Mixed entries pick up q*f; log-scale diagonals get the extra
        first-derivative term q^2 * d2 + q * d1.
        """
        jac = np.where(self.log_mask, theta, 1.0)
        H = hess_c * np.outer(jac, jac)
        extra = np.where(self.log_mask, grad_c * theta, 0.0)
        H[np.diag_indices_from(H)] += extra
        return H


@dataclass(frozen=True)
class MeanTrajectory:
    """Expected daily counts plus their cumulative view."""

    times: np.ndarray
    values: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_daily(cls, times, values, start_level: float = 0.0):
        values = np.asarray(values, dtype=float)
        return cls(np.asarray(times), values, start_level + np.cumsum(values))


def _linear_predictor(spec: ModelSpec, beta: np.ndarray, times) -> np.ndarray:
    rows = spec.design_rows(times)
    return np.exp(rows @ beta)


def mean_daily(spec: ModelSpec, theta: np.ndarray, times) -> np.ndarray:
    """Expected daily count at model times t (1-based)."""
    layout = get_layout(spec)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    gamma = layout.gamma(theta)
    ld = richards_diff(times, gamma)
    if spec.covariates == "additive":
        return _linear_predictor(spec, layout.beta(theta), times) + ld
    if spec.covariates == "multiplicative":
        alpha = theta[layout.index["alpha"]] if "alpha" in layout.index else 0.0
        return alpha + _linear_predictor(spec, layout.beta(theta), times) * ld
    alpha = theta[layout.index["alpha"]] if "alpha" in layout.index else 0.0
    return alpha + ld


def mean_gradient(spec: ModelSpec, theta: np.ndarray, times) -> np.ndarray:
    """(T, n) gradient of the daily mean w.r.t. the free parameters."""
    layout = get_layout(spec)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    gamma = layout.gamma(theta)
    G = np.zeros((times.size, layout.n))
    grad4 = richards_diff_gradient(times, gamma)  # over (r, h, p, s)
    gnames = ["r", "h", "p", "s"]

    if spec.covariates == "multiplicative":
        eta = _linear_predictor(spec, layout.beta(theta), times)
        ld1 = richards_diff(times, gamma)  # r = 1 inside gamma here
        for j, name in enumerate(gnames):
            if name in layout.index:
                G[:, layout.index[name]] = eta * grad4[:, j]
        rows = spec.design_rows(times)
        j0 = layout.index["beta0"]
        G[:, j0:j0 + spec.n_covariates] = rows * (eta * ld1)[:, None]
    else:
        for j, name in enumerate(gnames):
            if name in layout.index:
                G[:, layout.index[name]] = grad4[:, j]
        if spec.covariates == "additive":
            eta = _linear_predictor(spec, layout.beta(theta), times)
            rows = spec.design_rows(times)
            j0 = layout.index["beta0"]
            G[:, j0:j0 + spec.n_covariates] = rows * eta[:, None]

    if "alpha" in layout.index:
        G[:, layout.index["alpha"]] = 1.0
    return G


def mean_hessian(spec: ModelSpec, theta: np.ndarray, times) -> np.ndarray:
    """(T, n, n) second derivatives of the daily mean."""
    layout = get_layout(spec)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    gamma = layout.gamma(theta)
    T = times.size
    H = np.zeros((T, layout.n, layout.n))
    hess4 = richards_diff_hessian(times, gamma)
    gnames = ["r", "h", "p", "s"]
    gidx = [layout.index[n] for n in gnames if n in layout.index]
    gsub = [j for j, n in enumerate(gnames) if n in layout.index]

    if spec.covariates == "multiplicative":
        eta = _linear_predictor(spec, layout.beta(theta), times)
        ld1 = richards_diff(times, gamma)
        grad4 = richards_diff_gradient(times, gamma)
        rows = spec.design_rows(times)
        j0 = layout.index["beta0"]
        k = spec.n_covariates
        # gamma block scaled by the predictor
        for a, ja in zip(gsub, gidx):
            for b, jb in zip(gsub, gidx):
                H[:, ja, jb] = eta * hess4[:, a, b]
        # beta block and gamma-beta cross terms
        bb = rows[:, :, None] * rows[:, None, :] * (eta * ld1)[:, None, None]
        H[:, j0:j0 + k, j0:j0 + k] = bb
        for a, ja in zip(gsub, gidx):
            cross = rows * (eta * grad4[:, a])[:, None]
            H[:, ja, j0:j0 + k] = cross
            H[:, j0:j0 + k, ja] = cross
    else:
        for a, ja in zip(gsub, gidx):
            for b, jb in zip(gsub, gidx):
                H[:, ja, jb] = hess4[:, a, b]
        if spec.covariates == "additive":
            eta = _linear_predictor(spec, layout.beta(theta), times)
            rows = spec.design_rows(times)
            j0 = layout.index["beta0"]
            k = spec.n_covariates
            H[:, j0:j0 + k, j0:j0 + k] = (
                rows[:, :, None] * rows[:, None, :] * eta[:, None, None]
            )
    return H


# module-level conveniences mirroring the layout methods

def to_unconstrained(theta, spec: ModelSpec) -> np.ndarray:
    return ParamLayout(spec).to_unconstrained(np.asarray(theta, dtype=float))


def from_unconstrained(v, spec: ModelSpec) -> np.ndarray:
    return ParamLayout(spec).from_unconstrained(np.asarray(v, dtype=float))


def pullback_gradient(grad_c, theta, spec: ModelSpec) -> np.ndarray:
    return ParamLayout(spec).pullback_gradient(
        np.asarray(grad_c, dtype=float), np.asarray(theta, dtype=float)
    )


def pullback_hessian(hess_c, grad_c, theta, spec: ModelSpec) -> np.ndarray:
    return ParamLayout(spec).pullback_hessian(
        np.asarray(hess_c, dtype=float),
        np.asarray(grad_c, dtype=float),
        np.asarray(theta, dtype=float),
    )
