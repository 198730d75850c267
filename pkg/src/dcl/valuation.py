"""Closed-form value function of a delayed linear dividend strategy.

Below the barrier b the strategy pays nothing and the value is a multiple of
the scale function W; above it dividends flow at rate K*U and the value is the
linear particular solution plus a multiple of H.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, DomainError
from .params import ControlParams, ModelParams
from .specfun import ScaleEval, h_func, w_scale

_BRANCH_OFFSET = 1e-12


@dataclass(frozen=True)
class ValueFunctionRep:
    """Piecewise value function v_b: coefficients on W below b and H above b."""

    b: float
    c_b: float
    d_b: float
    m: ModelParams
    c: ControlParams

    @property
    def weight(self) -> float:
        return self.c.k / (self.c.q + self.c.k)


@dataclass
class HjbReport:
    grid: list[float]
    residual: list[float]
    gradient_ok: list[bool]
    max_abs_residual: float = field(init=False)

    def __post_init__(self) -> None:
        self.max_abs_residual = max((abs(r) for r in self.residual), default=0.0)

    @property
    def all_gradients_ok(self) -> bool:
        return all(self.gradient_ok)


@dataclass(frozen=True)
class PastingReport:
    """One-sided values and derivatives of v_b at the barrier."""

    b: float
    left: ScaleEval
    right: ScaleEval

    @property
    def jumps(self) -> tuple[float, float, float]:
        return (
            self.right.value - self.left.value,
            self.right.d1 - self.left.d1,
            self.right.d2 - self.left.d2,
        )


def coefficients(b: float, m: ModelParams, c: ControlParams) -> tuple[float, float]:
    """Return ``(C_b, D_b)``."""
    if b < 0:
        raise DomainError(f"barrier must be >= 0, got {b}")
    w = w_scale(b, m, c)
    h = h_func(b, m, c)
    shifted = b + m.mu / c.q
    denom = w.d1 * h.value - w.value * h.d1
    if not abs(denom) >= 1e-300:
        raise DegenerateError(f"vanishing Wronskian-type denominator at b={b}: {denom}")
    c_b = (h.value - shifted * h.d1) / denom
    d_b = (w.value - shifted * w.d1) / denom
    return c_b, d_b


def value_rep(b: float, m: ModelParams, c: ControlParams) -> ValueFunctionRep:
    c_b, d_b = coefficients(b, m, c)
    return ValueFunctionRep(b=b, c_b=c_b, d_b=d_b, m=m, c=c)


def _lower(x: float, rep: ValueFunctionRep) -> ScaleEval:
    w = w_scale(x, rep.m, rep.c)
    a = rep.weight * rep.c_b
    return ScaleEval(a * w.value, a * w.d1, a * w.d2)


def _upper(x: float, rep: ValueFunctionRep) -> ScaleEval:
    h = h_func(x, rep.m, rep.c)
    a = rep.weight
    return ScaleEval(
        a * (x + rep.m.mu / rep.c.q + rep.d_b * h.value),
        a * (1.0 + rep.d_b * h.d1),
        a * rep.d_b * h.d2,
    )


def evaluate(x: float, rep: ValueFunctionRep) -> ScaleEval:
    """v_b and its first two derivatives at x (left branch at x == b)."""
    if x <= 0:
        if x == 0 and rep.b > 0:
            return _lower(0.0, rep)
        return ScaleEval(0.0, 0.0, 0.0)
    if x <= rep.b:
        return _lower(x, rep)
    return _upper(x, rep)


def value(x: float, rep: ValueFunctionRep) -> float:
    if x <= 0:
        return 0.0
    return evaluate(x, rep).value


def value_d1(x: float, rep: ValueFunctionRep) -> float:
    return evaluate(x, rep).d1


def value_d2(x: float, rep: ValueFunctionRep) -> float:
    return evaluate(x, rep).d2


def pasting(rep: ValueFunctionRep) -> PastingReport:
    """Both branches evaluated exactly at the barrier."""
    if rep.b <= 0:
        raise DomainError("pasting is only defined for b > 0")
    return PastingReport(rep.b, _lower(rep.b, rep), _upper(rep.b, rep))


def value_d1_left(rep: ValueFunctionRep) -> float:
    return _lower(rep.b, rep).d1


def value_d1_right(rep: ValueFunctionRep) -> float:
    return _upper(rep.b, rep).d1


def hjb_check(rep: ValueFunctionRep, grid, gradient_tol: float = 1e-9) -> HjbReport:
    """Residual of the HJB equation and the gradient conditions on a grid.

    Below the barrier the residual is that of the uncontrolled generator and
    the value must have slope >= 1; above it the maximal payout K*x enters and
    the slope must be <= 1. Residuals are scaled by ``1 + |q v(x)|``.
    """
    xs = np.asarray(grid, dtype=float)
    if xs.ndim != 1 or xs.size == 0:
        raise DomainError("grid must be a non-empty 1-d sequence")
    if np.any(xs <= 0):
        raise DomainError("grid points must be > 0")
    if np.any(np.diff(xs) <= 0):
        raise DomainError("grid must be strictly increasing")

    m, c = rep.m, rep.c
    half_s2 = 0.5 * m.sigma * m.sigma
    residual, ok = [], []
    for x in xs:
        if abs(x - rep.b) < _BRANCH_OFFSET:
            x = rep.b - _BRANCH_OFFSET if rep.b - _BRANCH_OFFSET > 0 else rep.b + _BRANCH_OFFSET
        if x <= rep.b:
            v = _lower(x, rep)
            r = half_s2 * v.d2 + m.mu * v.d1 - c.q * v.value
            ok.append(bool(v.d1 >= 1.0 - gradient_tol))
        else:
            v = _upper(x, rep)
            r = half_s2 * v.d2 + (m.mu - c.k * x) * v.d1 - c.q * v.value + c.k * x
            ok.append(bool(v.d1 <= 1.0 + gradient_tol))
        residual.append(r / (1.0 + abs(c.q * v.value)))
    return HjbReport(grid=[float(x) for x in xs], residual=residual, gradient_ok=ok)
