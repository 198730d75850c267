import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

import oracles
from dcl import optimizer
from dcl.errors import BracketError, DomainError
from dcl.optimizer import (KSize, Regime, _bracketed_root, barrier_residual, classical_barrier,
                           delta_threshold, ordering_report, solve_b_star)
from dcl.params import ControlParams, ModelParams
from dcl.specfun import h_over_dh, w_scale
from dcl.valuation import value, value_rep

FIG = ModelParams(0.3, 4.5)
TOP = ControlParams(0.025, 0.1)
BOTTOM = ControlParams(0.05, 0.1)
REMARK = ControlParams(0.05, 0.35)

# mpmath oracle values (see oracles.py)
C_STAR_FIG3 = 4.197253941916498
C_STAR_TOP = 11.335885680255151
B_STAR_TOP = 4.804458012026385
B_STAR_REMARK = 2.260380141922971
B_STAR_K1000 = 4.194842947759214
DELTA_TOP = 30.411702739654365
DELTA_BOTTOM = 17.668266060632737

params = st.tuples(st.floats(0.05, 1.0), st.floats(0.5, 5.0), st.floats(0.01, 0.2),
                   st.floats(0.01, 5.0))


# ---------------------------------------------------------------- c*

def test_classical_barrier_fig3():
    assert classical_barrier(FIG, ControlParams(0.07, 1.0)) == pytest.approx(C_STAR_FIG3, rel=1e-13)
    assert classical_barrier(FIG, TOP) == pytest.approx(C_STAR_TOP, rel=1e-13)


def test_classical_barrier_zero_drift():
    assert classical_barrier(ModelParams(0.0, 2.0), TOP) == 0.0


@given(params)
def test_classical_barrier_below_mu_over_q(p):
    mu, sigma, q, k = p
    m, c = ModelParams(mu, sigma), ControlParams(q, k)
    cs = classical_barrier(m, c)
    assert 0 < cs < mu / q
    w = w_scale(cs, m, c)
    assert abs(w.value / w.d1 - mu / q) <= 1e-10 * mu / q


# ---------------------------------------------------------------- Delta

def test_delta_values():
    assert delta_threshold(FIG, TOP) == pytest.approx(DELTA_TOP, rel=1e-10)
    assert delta_threshold(FIG, BOTTOM) == pytest.approx(DELTA_BOTTOM, rel=1e-10)
    assert delta_threshold(FIG, TOP) < 0.3 * 0.1 / 0.025 ** 2 == pytest.approx(48.0)
    assert delta_threshold(FIG, BOTTOM) > 0.3 * 0.1 / 0.05 ** 2


@given(params)
def test_delta_positive(p):
    mu, sigma, q, k = p
    assert delta_threshold(ModelParams(mu, sigma), ControlParams(q, k)) > 0


# ---------------------------------------------------------------- b*

def test_fig1_bottom_linear_at_zero():
    d = solve_b_star(FIG, BOTTOM)
    assert d.regime is Regime.LINEAR_AT_ZERO and d.b_star == 0.0
    assert d.threshold == pytest.approx(12.0)


def test_fig1_top_delayed():
    d = solve_b_star(FIG, TOP)
    assert d.regime is Regime.DELAYED_AT_B_STAR
    assert 0 < d.b_star < d.c_star
    assert abs(d.b_star - B_STAR_TOP) <= 1e-12 * d.c_star
    assert abs(d.residual) <= 1e-10


def test_large_k_approaches_c_star():
    d = solve_b_star(FIG, ControlParams(0.07, 1000.0))
    assert abs(d.b_star - B_STAR_K1000) <= 1e-12 * d.c_star
    assert d.b_star >= 0.95 * d.c_star


@given(params)
def test_b_star_matches_oracle(p):
    mu, sigma, q, k = p
    m, c = ModelParams(mu, sigma), ControlParams(q, k)
    d = solve_b_star(m, c)
    assert (d.regime is Regime.LINEAR_AT_ZERO) == (d.threshold <= d.delta)
    if d.regime is Regime.DELAYED_AT_B_STAR:
        assert 0 < d.b_star < d.c_star
        want = float(oracles.b_star(mu, sigma, q, k))
        assert abs(d.b_star - want) <= 1e-9 * d.c_star
    else:
        assert d.b_star == 0.0


def test_boundary_equality_is_linear(monkeypatch):
    monkeypatch.setattr(optimizer, "delta_threshold", lambda m, c: m.mu * c.k / c.q ** 2)
    assert solve_b_star(FIG, TOP).regime is Regime.LINEAR_AT_ZERO


def test_domain_errors():
    with pytest.raises(DomainError):
        solve_b_star(ModelParams(-0.1, 1.0), TOP)
    with pytest.raises(DomainError):
        solve_b_star(ModelParams(0.0, 1.0), TOP)
    with pytest.raises(DomainError):
        solve_b_star(FIG, ControlParams(0.05, 0.0))


def test_residual_single_sign_change():
    cs = classical_barrier(FIG, TOP)
    bs = np.linspace(1e-10 * cs, (1 - 1e-10) * cs, 10_000)
    r = np.array([barrier_residual(b, FIG, TOP) for b in bs])
    assert np.count_nonzero(np.diff(np.sign(r)) != 0) == 1


@given(params)
def test_residual_single_sign_change_random(p):
    mu, sigma, q, k = p
    m, c = ModelParams(mu, sigma), ControlParams(q, k)
    d = solve_b_star(m, c)
    assume(d.regime is Regime.DELAYED_AT_B_STAR)
    bs = np.linspace(1e-10 * d.c_star, (1 - 1e-10) * d.c_star, 300)
    r = np.array([barrier_residual(b, m, c) for b in bs])
    assert np.count_nonzero(np.diff(np.sign(r)) != 0) == 1


@given(params, st.floats(0.0, 40.0))
def test_inequality_q_h_ratio(p, b):
    mu, sigma, q, k = p
    m, c = ModelParams(mu, sigma), ControlParams(q, k)
    assert q * h_over_dh(b, m, c) < k * (mu / k - b)


def _grid_argmax(m, c, x0):
    cs = classical_barrier(m, c)
    delta = cs / 400
    grid = delta * np.arange(401)
    vals = [value(x0, value_rep(b, m, c)) for b in grid]
    return grid[int(np.argmax(vals))], delta


@pytest.mark.parametrize("c", [TOP, BOTTOM], ids=["fig1-top", "fig1-bottom"])
def test_grid_argmax_matches_b_star(c):
    d = solve_b_star(FIG, c)
    best, delta = _grid_argmax(FIG, c, 4.6)
    assert abs(best - d.b_star) <= delta


def test_fig3_monotone_and_bounded():
    bs = [solve_b_star(FIG, ControlParams(0.07, k)).b_star for k in np.geomspace(0.01, 1000, 40)]
    assert all(a <= b for a, b in zip(bs, bs[1:]))
    assert max(bs) < C_STAR_FIG3
    assert bs[-1] >= 0.95 * C_STAR_FIG3
    assert bs[0] == 0.0


# ---------------------------------------------------------------- ordering

def test_remark_ordering():
    rep = ordering_report(FIG, REMARK)
    assert rep.size is KSize.LARGE
    assert abs(rep.b_star - B_STAR_REMARK) <= 1e-12 * rep.c_star
    assert rep.mu_over_k < rep.b_star < rep.c_star < rep.mu_over_q
    assert rep.ordering == ["mu/K", "b*", "c*", "mu/q"]
    assert rep.b_star_below_mu_over_k is False
    assert rep.large_k_criterion is False


def test_small_k_ordering():
    m, c = FIG, ControlParams(0.01, 0.01)
    rep = ordering_report(m, c)
    assert rep.size is KSize.SMALL and rep.large_k_criterion is None
    assert rep.b_star < rep.mu_over_k == pytest.approx(30.0)
    assert rep.b_star == pytest.approx(3.082842312732678, rel=1e-10)


@given(params)
def test_large_k_criterion_decides_position(p):
    mu, sigma, q, k = p
    m, c = ModelParams(mu, sigma), ControlParams(q, k)
    d = solve_b_star(m, c)
    assume(d.regime is Regime.DELAYED_AT_B_STAR)
    rep = ordering_report(m, c, d)
    if rep.size is KSize.SMALL:
        assert rep.b_star < rep.mu_over_k
    elif rep.mu_over_k < rep.c_star < rep.mu_over_q:
        assert rep.large_k_criterion == rep.b_star_below_mu_over_k


def test_ordering_needs_delayed_regime():
    with pytest.raises(DomainError):
        ordering_report(FIG, BOTTOM)


# ---------------------------------------------------------------- root finder

@given(st.floats(-5.0, 5.0), st.floats(0.1, 10.0))
def test_bracketed_root_on_cubic(root, scale):
    f = lambda x: scale * (x - root) ** 3 + (x - root)
    x = _bracketed_root(f, -10.0, 10.0, xtol=1e-12)
    assert abs(x - root) <= 1e-11


def test_bracketed_root_exact_endpoint():
    assert _bracketed_root(lambda x: x - 1.0, 1.0, 2.0, 1e-12) == 1.0


def test_bracketed_root_requires_sign_change():
    with pytest.raises(BracketError):
        _bracketed_root(lambda x: x * x + 1, -1.0, 1.0, 1e-12)
