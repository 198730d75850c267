"""Optimal barrier: regime test, root solve for b*, and level orderings."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

from .errors import BracketError, DomainError
from .params import ControlParams, ModelParams
from .specfun import h_over_dh, w_over_dw


class Regime(str, enum.Enum):
    LINEAR_AT_ZERO = "LinearAtZero"
    DELAYED_AT_B_STAR = "DelayedAtBStar"


class KSize(str, enum.Enum):
    SMALL = "SmallK"
    LARGE = "LargeK"


@dataclass(frozen=True)
class RegimeDecision:
    delta: float
    threshold: float
    regime: Regime
    b_star: float
    c_star: float
    residual: float


@dataclass(frozen=True)
class OrderingReport:
    size: KSize
    b_star: float
    mu_over_k: float
    c_star: float
    mu_over_q: float
    b_star_below_mu_over_k: bool
    # large-K criterion value; None for SmallK
    large_k_criterion: bool | None

    @property
    def ordering(self) -> list[str]:
        levels = {"b*": self.b_star, "mu/K": self.mu_over_k, "c*": self.c_star, "mu/q": self.mu_over_q}
        return sorted(levels, key=levels.__getitem__)


def classical_barrier(m: ModelParams, c: ControlParams) -> float:
    """Optimal reflection level c* of the unconstrained de Finetti problem."""
    s2 = m.sigma * m.sigma
    disc = m.mu * m.mu + 2.0 * c.q * s2
    if disc <= 0:
        raise DomainError("mu^2 + 2 q sigma^2 must be positive")
    root = math.sqrt(disc)
    return s2 / root * math.log((m.mu + root) / (root - m.mu))


def delta_threshold(m: ModelParams, c: ControlParams) -> float:
    """Delta = -H(0)/H'(0)."""
    return -h_over_dh(0.0, m, c)


def barrier_residual(b: float, m: ModelParams, c: ControlParams) -> float:
    """(K+q)(W/W' - mu/q) + K(mu/K - b) - q H/H'; zero exactly at b*."""
    k, q = c.k, c.q
    return (k + q) * (w_over_dw(b, m, c) - m.mu / q) + (m.mu - k * b) - q * h_over_dh(b, m, c)


def _bracketed_root(f: Callable[[float], float], lo: float, hi: float, xtol: float,
                    max_iter: int = 200) -> float:
    """Root of f on [lo, hi]: Illinois false position, bisecting whenever a
    step fails to halve the bracket."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f = {f_lo}, {f_hi}")
    bisect = False
    kept = None
    for _ in range(max_iter):
        width = hi - lo
        if width <= xtol:
            break
        if bisect:
            x = 0.5 * (lo + hi)
        else:
            x = hi - f_hi * width / (f_hi - f_lo)
            # stay xtol/2 inside so the bracket can collapse from either side
            x = min(max(x, lo + 0.5 * xtol), hi - 0.5 * xtol)
        fx = f(x)
        if fx == 0:
            return x
        if (fx > 0) == (f_hi > 0):
            hi, f_hi = x, fx
            if kept == "lo":
                f_lo *= 0.5
            kept = "lo"
        else:
            lo, f_lo = x, fx
            if kept == "hi":
                f_hi *= 0.5
            kept = "hi"
        bisect = (hi - lo) > 0.5 * width
    return 0.5 * (lo + hi)


def solve_b_star(m: ModelParams, c: ControlParams) -> RegimeDecision:
    """Classify the optimal strategy and locate b* when it is interior."""
    if m.mu <= 0:
        raise DomainError(f"solve_b_star requires mu > 0, got {m.mu}")
    if not c.k > 0:
        raise DomainError(f"solve_b_star requires k > 0, got {c.k}")
    delta = delta_threshold(m, c)
    threshold = m.mu * c.k / (c.q * c.q)
    c_star = classical_barrier(m, c)
    if threshold <= delta:
        return RegimeDecision(delta, threshold, Regime.LINEAR_AT_ZERO, 0.0, c_star,
                              barrier_residual(0.0, m, c))

    def f(b: float) -> float:
        return barrier_residual(b, m, c)

    b_star = _bracketed_root(f, 1e-10 * c_star, (1.0 - 1e-10) * c_star, xtol=1e-12 * c_star)
    return RegimeDecision(delta, threshold, Regime.DELAYED_AT_B_STAR, b_star, c_star, f(b_star))


def ordering_report(m: ModelParams, c: ControlParams,
                    decision: RegimeDecision | None = None) -> OrderingReport:
    """Position of b* relative to mu/K, c* and mu/q."""
    decision = decision or solve_b_star(m, c)
    if decision.regime is not Regime.DELAYED_AT_B_STAR:
        raise DomainError("ordering_report requires the DelayedAtBStar regime")
    mu_k = m.mu / c.k
    mu_q = m.mu / c.q
    c_star = decision.c_star
    if c_star < min(mu_q, mu_k):
        size, criterion = KSize.SMALL, None
    else:
        size = KSize.LARGE
        criterion = ((c.k + c.q) * (w_over_dw(mu_k, m, c) - mu_q)
                     > c.q * h_over_dh(mu_k, m, c))
    return OrderingReport(size, decision.b_star, mu_k, c_star, mu_q,
                          decision.b_star < mu_k, criterion)
