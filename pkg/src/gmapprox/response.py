"""Response-function moment curves for shot-noise drifts.

For an exponentially decaying response R(t) = e^{-lam t} on t >= 0 triggered
at a random time with density p, the drift moments need

    phi(t) = E[R(t - T)] = (R * p)(t),      psi(t) = E[R^2(t - T)] = (R^2 * p)(t).

Closed forms are used for exponential firing times (any rate) and for Gamma
firing times when the incomplete-gamma argument is positive; otherwise both
convolutions are evaluated numerically on the grid.
"""

from __future__ import annotations

import math

import numpy as np

from .timebase import Curve, TimeGrid, stable_exp_diff

__all__ = ["lower_incomplete_gamma", "response_moment_curves", "convolution_oracle"]

_MAX_ITER = 500


def lower_incomplete_gamma(alpha: float, x: float) -> float:
    """Lower incomplete gamma function g(alpha, x) = int_0^x s^{alpha-1} e^{-s} ds.

    Power series for x < alpha + 1, continued fraction for the upper tail
    otherwise. Relative error below 1e-10 over the supported domain.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    if x < alpha + 1.0:
        return _gamma_series(alpha, x)
    return math.exp(math.lgamma(alpha)) - _upper_gamma_cf(alpha, x)


def _gamma_series(alpha: float, x: float) -> float:
    # g(alpha, x) = x^alpha e^{-x} sum_n x^n / (alpha (alpha+1) ... (alpha+n))
    term = 1.0 / alpha
    total = term
    for n in range(1, _MAX_ITER):
        term *= x / (alpha + n)
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * math.exp(alpha * math.log(x) - x)


def _upper_gamma_cf(alpha: float, x: float) -> float:
    # Upper tail via the Lentz continued fraction for Gamma(alpha, x).
    tiny = 1e-300
    b = x + 1.0 - alpha
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    f = d
    for n in range(1, _MAX_ITER):
        an = -n * (n - alpha)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return f * math.exp(alpha * math.log(x) - x)


def response_moment_curves(dist, lam: float, grid: TimeGrid) -> tuple[Curve, Curve]:
    """phi and psi curves for a firing-time distribution; see module docstring.

    Supports exponential, gamma and point-mass firing times (the drift zoo
    needs nothing else); gamma falls back to numerical convolution whenever a
    closed-form incomplete-gamma argument is nonpositive.
    """
    from . import drift  # local import: drift also imports this module

    if lam <= 0:
        raise ValueError(f"response rate must be positive, got {lam}")
    t = grid.times()
    if isinstance(dist, drift.Exponential):
        nu = dist.rate
        if nu == lam or nu == 2 * lam:
            raise ValueError(
                f"firing rate {nu} must differ from response rate {lam} and {2 * lam}"
            )
        phi = nu * stable_exp_diff(lam, nu, t)
        psi = nu * stable_exp_diff(2 * lam, nu, t)
        return Curve(grid, phi), Curve(grid, psi)
    if isinstance(dist, drift.Gamma):
        phi = _gamma_case(dist, lam, grid)
        psi = _gamma_case(dist, 2 * lam, grid)
        return phi, psi
    if isinstance(dist, drift.PointMass):
        tau = dist.value
        if tau < 0:
            raise ValueError("firing time must be nonnegative")
        u = t - tau
        phi = np.where(u >= 0, np.exp(-lam * np.maximum(u, 0.0)), 0.0)
        return Curve(grid, phi), Curve(grid, phi**2)
    raise ValueError(f"unsupported firing-time distribution: {type(dist).__name__}")


def _gamma_case(dist, decay: float, grid: TimeGrid) -> Curve:
    # E[e^{-decay (t-T)} 1_{T<=t}] for T ~ Gamma(rate, shape)
    nu, alpha = dist.rate, dist.shape
    t = grid.times()
    arg = nu - decay
    if arg > 0:
        gam = math.exp(math.lgamma(alpha))
        inc = np.array([lower_incomplete_gamma(alpha, arg * tk) for tk in t])
        vals = (nu / arg) ** alpha * np.exp(-decay * t) * inc / gam
        return Curve(grid, vals)
    return _convolve_response(lambda u: np.exp(-decay * u), _gamma_pdf(nu, alpha), grid)


def _gamma_pdf(rate: float, shape: float):
    logc = shape * math.log(rate) - math.lgamma(shape)

    def pdf(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(logc + (shape - 1) * np.log(s[pos]) - rate * s[pos])
        if shape == 1:
            out[s == 0] = rate
        return out

    return pdf


def _convolve_response(response, pdf, grid: TimeGrid) -> Curve:
    """Trapezoid convolution (response * pdf)(t_k) on the grid."""
    t = grid.times()
    dt = grid.dt
    r = response(t)
    p = pdf(t)
    full = np.convolve(r, p)[: grid.n_nodes]
    # convert the plain convolution sum into trapezoid weights
    vals = dt * (full - 0.5 * r * p[0] - 0.5 * r[0] * p)
    vals[0] = 0.0
    return Curve(grid, vals)


def convolution_oracle(dist, lam: float, grid: TimeGrid, squared: bool = False) -> Curve:
    """Direct numerical convolution of R (or R^2) with the firing-time density.

    Exists as an independent check of the closed forms; not used on any
    production path for exponential firing times.
    """
    from . import drift

    decay = 2 * lam if squared else lam
    if isinstance(dist, drift.Exponential):
        pdf = lambda s: dist.rate * np.exp(-dist.rate * np.asarray(s, dtype=float))
    elif isinstance(dist, drift.Gamma):
        pdf = _gamma_pdf(dist.rate, dist.shape)
    elif isinstance(dist, drift.Uniform):
        if dist.lo < 0:
            raise ValueError("firing-time support must be nonnegative")
        width = dist.hi - dist.lo
        pdf = lambda s: np.where(
            (np.asarray(s) >= dist.lo) & (np.asarray(s) <= dist.hi), 1.0 / width, 0.0
        )
    else:
        raise ValueError(f"no density available for {type(dist).__name__}")
    return _convolve_response(lambda u: np.exp(-decay * u), pdf, grid)
