"""Richards (generalized logistic) growth curve and its derivatives.

The cumulative response is ``b + r / (1 + 10**(h*(p - t)))**s`` with
``r, h, s > 0``, ``b >= 0`` and ``p`` unconstrained.  Daily expected
counts are the first differences of this curve, which do not depend on
the lower asymptote ``b``.

All evaluations go through log-space (``log1p(exp(.))``) so that large
``h*(p - t)`` or large ``s`` never overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LN10 = np.log(10.0)

__all__ = [
    "RichardsParams",
    "richards",
    "richards_diff",
    "richards_gradient",
    "richards_hessian",
    "peak_time",
]


class InvalidParameterError(ValueError):
    """Raised when growth-curve parameters violate their domain."""


@dataclass(frozen=True)
class RichardsParams:
    """Parameters of the Richards curve.

    b : lower asymptote (counts, >= 0)
    r : distance between lower and upper asymptote (> 0)
    h : hill / growth rate (1/day, > 0)
    p : peak-position parameter (day index, any real)
    s : asymmetry (> 0)
    """

    b: float
    r: float
    h: float
    p: float
    s: float

    def __post_init__(self):
        vals = (self.b, self.r, self.h, self.p, self.s)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidParameterError(f"non-finite parameter in {vals}")
        if self.b < 0:
            raise InvalidParameterError(f"b must be >= 0, got {self.b}")
        if self.r <= 0 or self.h <= 0 or self.s <= 0:
            raise InvalidParameterError(
                f"r, h, s must be > 0, got r={self.r}, h={self.h}, s={self.s}"
            )

    def as_array(self):
        return np.array([self.b, self.r, self.h, self.p, self.s])


def _log_sigmoid_core(t, h, p, s):
    """Return (F, w, u) where F = (1+10^{h(p-t)})^{-s}, w = sigmoid of the
    exponent in base e, u = log(1 + 10^{h(p-t)})."""
    z = LN10 * h * (p - np.asarray(t, dtype=float))
    u = np.logaddexp(0.0, z)
    F = np.exp(-s * u)
    w = expit(z)
    return F, w, u


def richards(t, gamma: RichardsParams):
    """Cumulative Richards curve b + r*(1 + 10^{h(p-t)})^{-s}."""
    F, _, _ = _log_sigmoid_core(t, gamma.h, gamma.p, gamma.s)
    return gamma.b + gamma.r * F


def richards_diff(t, gamma: RichardsParams):
    """First difference richards(t) - richards(t-1); independent of b.

    Written as -r * F(t) * expm1(-s * (u(t-1) - u(t))) so the result
    keeps full relative precision even where F(t) and F(t-1) are both
    close to 1 and their direct subtraction would cancel.  Since
    u(t-1) >= u(t), the expm1 argument is always <= 0 and never
    overflows.
    """
    t = np.asarray(t, dtype=float)
    F1, _, u1 = _log_sigmoid_core(t, gamma.h, gamma.p, gamma.s)
    _, _, u0 = _log_sigmoid_core(t - 1.0, gamma.h, gamma.p, gamma.s)
    return -gamma.r * F1 * np.expm1(-gamma.s * (u0 - u1))


def _grad_rhps(t, r, h, p, s):
    """Gradient of the cumulative curve w.r.t. (r, h, p, s) at times t."""
    t = np.asarray(t, dtype=float)
    F, w, u = _log_sigmoid_core(t, h, p, s)
    d = p - t
    g_r = F
    g_h = -r * s * F * LN10 * d * w
    g_p = -r * s * F * LN10 * h * w
    g_s = -r * F * u
    return np.stack([g_r, g_h, g_p, g_s], axis=-1)


def _hess_rhps(t, r, h, p, s):
    """Hessian of the cumulative curve over (r, h, p, s) at times t.

    Closed forms follow from F = exp(-s*u), u = log(1 + e^z),
    z = ln(10)*h*(p-t), w = e^z/(1+e^z), with
    dF/dh = -s F L d w, dF/dp = -s F L h w, dF/ds = -F u,
    dw/dh = L d w (1-w), dw/dp = L h w (1-w).
    """
    t = np.asarray(t, dtype=float)
    F, w, u = _log_sigmoid_core(t, h, p, s)
    d = p - t
    L = LN10
    core = (1.0 - w) - s * w  # shared factor of the h/p block

    h_rr = np.zeros_like(F)
    h_rh = -s * F * L * d * w
    h_rp = -s * F * L * h * w
    h_rs = -F * u
    h_hh = -r * s * F * (L * d) ** 2 * w * core
    h_hp = -r * s * F * L * w * (L * h * d * core + 1.0)
    h_pp = -r * s * F * (L * h) ** 2 * w * core
    h_hs = -r * L * d * w * F * (1.0 - s * u)
    h_ps = -r * L * h * w * F * (1.0 - s * u)
    h_ss = r * F * u**2

    H = np.empty(F.shape + (4, 4))
    H[..., 0, 0] = h_rr
    H[..., 0, 1] = H[..., 1, 0] = h_rh
    H[..., 0, 2] = H[..., 2, 0] = h_rp
    H[..., 0, 3] = H[..., 3, 0] = h_rs
    H[..., 1, 1] = h_hh
    H[..., 1, 2] = H[..., 2, 1] = h_hp
    H[..., 2, 2] = h_pp
    H[..., 1, 3] = H[..., 3, 1] = h_hs
    H[..., 2, 3] = H[..., 3, 2] = h_ps
    H[..., 3, 3] = h_ss
    return H


def richards_gradient(t, gamma: RichardsParams):
    """Gradient of the cumulative curve w.r.t. (r, h, p, s).

    The derivative w.r.t. b is identically 1 and is handled by callers.
    """
    return _grad_rhps(t, gamma.r, gamma.h, gamma.p, gamma.s)


def richards_hessian(t, gamma: RichardsParams):
    """Symmetric 4x4 Hessian of the cumulative curve over (r, h, p, s)."""
    return _hess_rhps(t, gamma.r, gamma.h, gamma.p, gamma.s)


def richards_diff_gradient(t, gamma: RichardsParams):
    """Gradient of richards_diff over (r, h, p, s)."""
    t = np.asarray(t, dtype=float)
    return richards_gradient(t, gamma) - richards_gradient(t - 1.0, gamma)


def richards_diff_hessian(t, gamma: RichardsParams):
    """Hessian of richards_diff over (r, h, p, s)."""
    t = np.asarray(t, dtype=float)
    return richards_hessian(t, gamma) - richards_hessian(t - 1.0, gamma)


def peak_time(gamma: RichardsParams) -> float:
    """Day index of the maximum of the continuous-time daily mean.

    Equals p + log10(s)/h; reduces to p when s = 1.
    """
    if gamma.h <= 0 or gamma.s <= 0:
        raise InvalidParameterError("peak_time requires h > 0 and s > 0")
    return gamma.p + np.log10(gamma.s) / gamma.h
