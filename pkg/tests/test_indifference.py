import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from threshold_warrants import (
    MarketParams, NumericalError, SelectorPolicy, TradeLimits, TradingTree, UtilityFunction,
    ValidationError, WealthGrid, indifference_price, optimize_delta, plain_stock_tree,
    price_threshold_warrant, value_surface, wealth_step,
)
from threshold_warrants.oracle import replication_price


def call(strike):
    return lambda s: max(s - strike, 0.0)


def one_period(p_claim=call(100)):
    return plain_stock_tree(100, 1.1, 0.9, 1, p_claim)


def closed_form_delta(p):
    return -(math.log(1 / p - 1) + 10) / 20


def test_utility_shape():
    u = UtilityFunction(2.0)
    xs = np.linspace(-3, 3, 13)
    vals = u(xs)
    assert np.all(np.diff(vals) > 0)
    assert np.all(np.diff(vals, 2) < 0)
    assert u(0.0) == pytest.approx(-0.5)
    assert u.from_log(u.to_log(1.3)) == pytest.approx(u(1.3))
    with pytest.raises(ValidationError):
        UtilityFunction(0.0)
    with pytest.raises(ValidationError):
        UtilityFunction(1.0, kind="power")


def test_wealth_step():
    assert wealth_step(0.0, -0.458, 100, 110) == pytest.approx(-4.58)
    assert wealth_step(7.0, 0.0, 100, 50, r_step=0.02) == pytest.approx(7.14)
    for delta in (-3.0, 0.0, 2.5):
        assert wealth_step(7.0, delta, 100, 102, r_step=0.02) == pytest.approx(7.14)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_optimize_delta_matches_closed_form(p):
    u = UtilityFunction(1.0)
    d, phi = optimize_delta(0.0, 100, 110, 90, TradeLimits(), lambda w: u(w + 10), lambda w: u(w), p)
    assert d == pytest.approx(closed_form_delta(p), abs=1e-6)
    assert phi == pytest.approx(-p * math.exp(-10 - 10 * d) - (1 - p) * math.exp(10 * d), rel=1e-12)


def test_optimize_delta_symmetric_and_frozen():
    u = UtilityFunction(1.0)
    d, _ = optimize_delta(3.0, 100, 110, 90, TradeLimits(), u, u, 0.5)
    assert d == pytest.approx(0.0, abs=1e-7)
    d, phi = optimize_delta(3.0, 100, 110, 90, TradeLimits(0, 0), lambda w: u(w + 10), u, 0.7, r_step=0.01)
    assert d == 0.0
    assert phi == pytest.approx(0.7 * u(3.03 + 10) + 0.3 * u(3.03))


def test_optimize_delta_on_grid():
    u = UtilityFunction(1.0)
    d, _ = optimize_delta(0.0, 100, 110, 90, TradeLimits(), lambda w: u(w + 10), u, 0.7,
                          delta_grid=[-1, -0.5, 0, 0.5])
    assert d == -0.5


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_grid_engine_delta_matches_closed_form(p):
    vs = value_surface(one_period(), UtilityFunction(1.0), p)
    assert vs.delta_star(0, 0, False, 0.0) == pytest.approx(closed_form_delta(p), abs=1e-6)


def test_one_period_example():
    res = indifference_price(one_period(), UtilityFunction(1.0), 0.7)
    assert res.price == pytest.approx(5.0, abs=1e-3)
    assert res.phi_with_claim == pytest.approx(-0.7 * math.exp(-5.424) - 0.3 * math.exp(-4.576), abs=1e-5)
    assert res.phi_with_claim < 0
    assert res.delta_star == pytest.approx(-0.4576, abs=1e-4)
    assert res.clamp_events == 0
    assert res.phi_breakeven == pytest.approx(res.phi_with_claim, rel=1e-9)
    assert set(res.to_dict()) >= {"price", "phi_with_claim", "phi_breakeven", "clamp_events", "runtime_ms"}


def test_linear_interpolation_mode_is_close():
    res = indifference_price(one_period(), UtilityFunction(1.0), 0.7, interpolation="linear")
    assert res.price == pytest.approx(5.0, abs=1e-2)


def test_terminal_slice_is_exact():
    tree = plain_stock_tree(100, 1.2, 0.8, 3, call(95))
    u = UtilityFunction(0.7)
    vs = value_surface(tree, u, 0.55)
    w = vs.grids[3].points
    for j in range(4):
        np.testing.assert_allclose(vs.phi_grid(3)[j, 0], u(w + tree.payoff[j, 0]), rtol=1e-14)


def test_no_trading_zero_claim_is_plain_utility():
    tree = plain_stock_tree(100, 1.2, 0.8, 4, lambda s: 0.0)
    u = UtilityFunction(1.5)
    vs = value_surface(tree, u, 0.6, limits=TradeLimits(0, 0), w_range=(-2, 2))
    for t in range(5):
        w = vs.grids[t].points
        for j in range(t + 1):
            np.testing.assert_allclose(vs.phi_grid(t)[j, 0], u(w), rtol=1e-12)


def test_value_increases_with_wealth():
    tree = plain_stock_tree(100, 1.15, 0.9, 5, call(100), barrier=110)
    vs = value_surface(tree, UtilityFunction(1.0), 0.5, limits=TradeLimits(-1, 1))
    for t in range(6):
        phi = vs.phi_grid(t)
        ok = tree.reachable[t, : t + 1]
        assert np.all(np.diff(phi[ok], axis=-1) > 0)


def test_zero_and_constant_claims():
    u = UtilityFunction(1.0)
    assert indifference_price(one_period(lambda s: 0.0), u, 0.7).price == pytest.approx(0.0, abs=1e-9)
    assert indifference_price(one_period(lambda s: 3.0), u, 0.7).price == pytest.approx(3.0, abs=1e-9)
    tree = plain_stock_tree(100, 1.1, 0.9, 3, lambda s: 3.0, r_step=0.01)
    assert indifference_price(tree, u, 0.6).price == pytest.approx(3.0 / 1.01**3, abs=1e-9)


@given(
    st.floats(10, 200), st.floats(1.01, 1.5), st.floats(0.5, 0.99), st.floats(0, 50), st.floats(0, 50),
    st.floats(0.05, 0.95), st.floats(0.1, 3.0),
)
def test_complete_one_period_matches_replication(s0, up, down, c_up, c_down, p, gamma):
    tree = plain_stock_tree(s0, up, down, 1, lambda s: c_up if s > s0 else c_down)
    res = indifference_price(tree, UtilityFunction(gamma), p, tol_w=1e-6)
    assert res.price == pytest.approx(replication_price(tree), abs=1e-6)
    assert res.clamp_events == 0


def test_complete_multi_period_matches_replication():
    tree = plain_stock_tree(100, 1.1, 0.92, 4, call(98), r_step=0.005, barrier=108)
    res = indifference_price(tree, UtilityFunction(0.8), 0.35)
    assert res.price == pytest.approx(replication_price(tree), abs=1e-6)


@given(st.sampled_from([-1.0, 0.0, 1.0]), st.floats(0.2, 0.8), st.integers(1, 4))
def test_cash_translation(c, p, n):
    base = plain_stock_tree(100, 1.1, 0.9, n, call(100), barrier=105)
    shifted = base.with_payoff(base.payoff + c)
    kw = dict(limits=TradeLimits(-0.5, 0.5), tol_w=1e-6)
    a = indifference_price(base, UtilityFunction(1.0), p, **kw).price
    b = indifference_price(shifted, UtilityFunction(1.0), p, **kw).price
    assert b - a == pytest.approx(c, abs=1e-6)


def test_arbitrage_prices_are_reported():
    tree = plain_stock_tree(100, 1.1, 0.9, 1, call(100), r_step=0.2)
    with pytest.raises(NumericalError, match="unbounded"):
        indifference_price(tree, UtilityFunction(1.0), 0.5)


def test_input_validation():
    tree = one_period()
    u = UtilityFunction(1.0)
    with pytest.raises(ValidationError):
        value_surface(tree, u, 1.0)
    with pytest.raises(ValidationError):
        value_surface(tree, u, 0.5, interpolation="cubic")
    with pytest.raises(ValidationError):
        value_surface(tree, u, 0.5, limits=TradeLimits(-1, 1), delta_grid=[-2, 0])
    with pytest.raises(ValidationError):
        WealthGrid(1.0, 1.0, 5)
    with pytest.raises(ValidationError):
        tree.with_payoff(np.full((2, 2), np.inf))


def test_threshold_pricing_defaults_to_risk_neutral_probability(caplog, two_step_params):
    with caplog.at_level(logging.WARNING):
        res = price_threshold_warrant(two_step_params, 2, SelectorPolicy("upper"), u=1.1)
    assert "p_physical" in caplog.text
    assert res.p == pytest.approx(0.476190476, rel=1e-8)
    assert res.certificate.holds
    assert res.classical_risk_neutral == pytest.approx(res.classical.price, abs=1e-6)


def test_met_threshold_prices_like_classical_warrant():
    p = MarketParams(1000, 10, 3, 95, 90, 1, 0.25, allow_met_threshold=True)
    for policy in ("lower", "expected"):
        res = price_threshold_warrant(p, 5, SelectorPolicy.parse(policy), p=0.6, limits=TradeLimits(-0.3, 0.3))
        assert res.threshold.price == pytest.approx(res.classical.price, abs=1e-9)


def test_threshold_pricing_bounded_trading(chain7_params):
    res = price_threshold_warrant(chain7_params, 7, p=0.5, u=1.1, limits=TradeLimits(-0.2, 0.2))
    assert res.threshold.clamp_events == 0
    assert 0 <= res.threshold.price <= res.classical_risk_neutral * 2
    assert res.to_dict()["selector"] == "expected"
