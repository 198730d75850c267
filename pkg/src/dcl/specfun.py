"""Special functions: gamma, the parabolic cylinder function D_{-lambda}, the
Brownian scale function W^(q) and the decreasing OU solution H^(q)_K.

Every evaluation of D_{-lambda} goes through the Gaussian-weighted integral

    G(lambda, z) = e^{z^2/4} D_{-lambda}(z)
                 = (1/Gamma(lambda)) int_0^inf t^(lambda-1) exp(-z t - t^2/2) dt,

computed in log space. With the substitution t = exp(s) the integrand becomes
smooth and unimodal on the whole real line; a sinh map centred at the mode
then makes the trapezoid rule converge geometrically, so successive halvings
of the step give a reliable error estimate.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import AccuracyError, DomainError
from .params import ControlParams, ModelParams

MAX_LAMBDA = 1.0e4

_REL_TOL = 1e-13
_ACCEPT_TOL = 1e-10
_MAX_HALVINGS = 14
_LOG_CUTOFF = 64.0  # integrand below exp(-64) of its peak is dropped
_PROBE = np.arange(0.25, 40.0, 0.25)


class ScaleEval(NamedTuple):
    """A function value with its first and second derivatives at one point."""

    value: float
    d1: float
    d2: float


def gamma(lam: float) -> float:
    """Gamma function for positive real arguments."""
    if not lam > 0:
        raise DomainError(f"gamma requires lambda > 0, got {lam}")
    return math.gamma(lam)


def _mode(lam: float, z: float) -> float:
    # positive root of t^2 + z t - lam = 0, written to avoid cancellation
    root = math.sqrt(z * z + 4.0 * lam)
    if z < 0:
        return 0.5 * (root - z)
    return 2.0 * lam / (root + z)


def log_gauss_integral(lam: float, z: float) -> float:
    """log of int_0^inf t^(lam-1) exp(-z t - t^2/2) dt (no 1/Gamma factor)."""
    if not lam > 0:
        raise DomainError(f"parabolic cylinder order requires lambda > 0, got {lam}")
    if lam > MAX_LAMBDA:
        raise AccuracyError(f"lambda = {lam:g} exceeds the supported maximum {MAX_LAMBDA:g}")
    if not math.isfinite(z):
        raise DomainError(f"argument must be finite, got {z}")

    t_mode = _mode(lam, z)
    s_mode = math.log(t_mode)
    width = 1.0 / math.sqrt(t_mode * math.sqrt(z * z + 4.0 * lam))
    peak = lam * s_mode - z * t_mode - 0.5 * t_mode * t_mode

    def log_integrand(u: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            s = s_mode + width * np.sinh(u)
            t = np.exp(s)
            vals = (lam * s - z * t - 0.5 * t * t - peak) + np.log(width * np.cosh(u))
        return np.where(np.isnan(vals), -np.inf, vals)

    def reach(sign: float) -> float:
        vals = log_integrand(sign * _PROBE)
        below = np.nonzero(vals < -_LOG_CUTOFF)[0]
        if below.size == 0:
            raise AccuracyError(f"integrand tail too heavy (lambda={lam:g}, z={z:g})")
        return float(_PROBE[below[0]])

    lo, hi = -reach(-1.0), reach(1.0)
    step = 0.25
    nodes = np.arange(lo, hi + 0.5 * step, step)
    total = step * float(np.exp(log_integrand(nodes)).sum())
    for _ in range(_MAX_HALVINGS):
        mids = np.arange(lo + 0.5 * step, hi, step)
        refined = 0.5 * total + 0.5 * step * float(np.exp(log_integrand(mids)).sum())
        step *= 0.5
        change = abs(refined - total)
        total = refined
        if change <= _REL_TOL * total:
            break
    else:
        if change > _ACCEPT_TOL * total:
            raise AccuracyError(
                f"quadrature refinement stalled at relative change {change / total:.2e} "
                f"(lambda={lam:g}, z={z:g})"
            )
    return peak + math.log(total)


def log_gauss_weighted_pcf(lam: float, z: float) -> float:
    """log of e^{z^2/4} D_{-lam}(z)."""
    return log_gauss_integral(lam, z) - math.lgamma(lam)


def pcf(lam: float, x: float) -> float:
    """Parabolic cylinder function D_{-lam}(x) for lam > 0 and real x."""
    return math.exp(log_gauss_weighted_pcf(lam, x) - 0.25 * x * x)


def _root(m: ModelParams, c: ControlParams) -> float:
    return math.sqrt(m.mu * m.mu + 2.0 * c.q * m.sigma * m.sigma)


def w_scale(x: float, m: ModelParams, c: ControlParams) -> ScaleEval:
    """q-scale function W^(q) of Brownian motion with drift, with derivatives.

    W vanishes on x <= 0. At x = 0 the right derivatives are returned, so
    ``d1 == 2 / sigma**2`` there.
    """
    if x < 0:
        return ScaleEval(0.0, 0.0, 0.0)
    s2 = m.sigma * m.sigma
    rho = _root(m, c)
    a = rho / s2
    drift = m.mu / s2
    # e^{-drift x} sinh(a x) split into two exponentials, a >= |drift|; the
    # expm1 terms have opposite signs, so small x loses no digits
    up = math.exp((a - drift) * x)
    down = math.exp(-(a + drift) * x)
    value = (math.expm1((a - drift) * x) - math.expm1(-(a + drift) * x)) / rho
    d1 = ((a - drift) * up + (a + drift) * down) / rho
    d2 = (2.0 / s2) * (c.q * value - m.mu * d1)
    return ScaleEval(value, d1, d2)


def w_over_dw(b: float, m: ModelParams, c: ControlParams) -> float:
    """W(b) / W'(b) through the coth form, finite at b = 0."""
    if b <= 0:
        return 0.0
    s2 = m.sigma * m.sigma
    rho = _root(m, c)
    th = math.tanh(b * rho / s2)
    return s2 * th / (rho - m.mu * th)


def _h_args(x: float, m: ModelParams, c: ControlParams) -> tuple[float, float, float]:
    if not c.k > 0:
        raise DomainError(f"H requires k > 0, got {c.k}")
    lam = c.q / c.k
    scale = math.sqrt(2.0 * c.k) / m.sigma
    z = (x - m.mu / c.k) * scale
    return lam, z, scale


def h_logs(x: float, m: ModelParams, c: ControlParams) -> tuple[float, float, float]:
    """Return ``(log H, log(-H'), H/H')`` at x without forming H itself.

    Useful where H over- or underflows but ratios stay moderate.
    """
    lam, z, scale = _h_args(x, m, c)
    log_h = log_gauss_weighted_pcf(lam, z)
    # H' = -lam * scale * H^{(q+K)}
    log_h_next = log_gauss_weighted_pcf(lam + 1.0, z)
    log_neg_d1 = math.log(lam * scale) + log_h_next
    ratio = -math.exp(log_h - log_neg_d1)
    return log_h, log_neg_d1, ratio


def h_func(x: float, m: ModelParams, c: ControlParams) -> ScaleEval:
    """Decreasing positive solution H^(q)_K of the killed OU generator equation."""
    log_h, log_neg_d1, _ = h_logs(x, m, c)
    value = math.exp(log_h)
    d1 = -math.exp(log_neg_d1)
    d2 = (2.0 / (m.sigma * m.sigma)) * ((c.k * x - m.mu) * d1 + c.q * value)
    return ScaleEval(value, d1, d2)


def h_over_dh(x: float, m: ModelParams, c: ControlParams) -> float:
    """H(x) / H'(x), always negative."""
    return h_logs(x, m, c)[2]
