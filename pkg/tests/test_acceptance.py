"""Acceptance criteria, one or more tests per criterion.

Run ``python tests/test_acceptance.py`` (or pytest on this file) for a per-criterion
PASS/FAIL summary at the end of the report.
"""

import math
import sys
import time

import numpy as np
import pytest

from threshold_warrants import (
    MarketParams, NodeIndex, SelectorPolicy, TradeLimits, TradingTree, UtilityFunction, build_augmented,
    build_lattice, certify_no_martingale, check_down_step_dominance, compute_bounds, critical_upticks,
    indifference_price, minimal_steps, plain_stock_tree, price_classical_warrant,
    price_threshold_warrant,
)
from threshold_warrants.oracle import (
    binomial_call_price, brute_indifference, martingale_feasibility, tree_is_martingale,
)

POLICIES = ["lower", "upper", "blend:0.5", "expected"]


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def random_market(rng, m_max=8):
    x0, n_sh = 1000.0, 10
    s0 = x0 / n_sh
    threshold = float(rng.uniform(s0 * 1.01, s0 * 1.4))
    return MarketParams(
        x0=x0, n_shares=n_sh, m_warrants=int(rng.integers(0, m_max + 1)),
        strike=float(rng.uniform(70, min(115.0, threshold - 1.0))), threshold=threshold,
        maturity=float(rng.uniform(0.5, 3)), sigma=float(rng.uniform(0.05, 0.5)),
        rate=float(rng.choice([0.0, rng.uniform(0, 0.05)])),
    )


# 1: two-step counterexample


def test_criterion_1_two_step_counterexample(two_step_params):
    cert, elapsed = timed(certify_no_martingale, two_step_params, 2, u=1.1)
    w = cert.expectation_witness()
    assert w is not None and w["node"] == [1, 1]
    assert w["e_miss"] == pytest.approx(110.0, abs=1e-6)
    assert w["e_hit"] == pytest.approx(106.54, abs=0.05)
    assert cert.holds
    assert elapsed < 0.1


# 2: minimal step count and uptick chain


def test_criterion_2_minimal_steps(steps_params):
    n_min, elapsed = timed(minimal_steps, steps_params)
    assert n_min == 135
    assert elapsed < 1.0


def test_criterion_2_down_step_dominance(steps_params):
    lat = build_lattice(steps_params, 135)
    surf = price_classical_warrant(lat)
    m, _ = critical_upticks(steps_params, lat.spec)
    n = lat.n_steps
    starts = [t for t in range(m, n) if (t - m) % 2 == 0
              and lat.values[n, (t + m) // 2] > steps_params.n_shares * steps_params.strike]
    assert starts
    assert all(check_down_step_dominance(lat, surf, m, t).holds for t in starts)


def test_criterion_2_full_uptick_chain(steps_params):
    cert, elapsed = timed(certify_no_martingale, steps_params, 135)
    assert elapsed < 1.0
    assert cert.chain_holds, cert.chain_note


# 3: one-period indifference example


def test_criterion_3_one_period_example():
    tree = plain_stock_tree(100, 1.1, 0.9, 1, lambda s: max(s - 100, 0.0))
    u = UtilityFunction(1.0)
    indifference_price(tree, u, 0.7)  # compile and cache the kernels outside the timing
    res, elapsed = timed(indifference_price, tree, u, 0.7)
    assert res.delta_star == pytest.approx(-0.4576, abs=1e-4)
    assert res.phi_with_claim == pytest.approx(-0.00618, abs=1e-5)
    assert res.price == pytest.approx(5.000, abs=1e-3)
    assert res.clamp_events == 0
    assert elapsed < 0.1


# 4: scaled-call identity


def test_criterion_4_scaled_call_identity():
    rng = np.random.default_rng(20240404)
    for _ in range(100):
        params = random_market(rng)
        n = int(rng.integers(1, 51))
        lat = build_lattice(params, n)
        sp = lat.spec
        call = binomial_call_price(params.x0 / params.n_shares, params.strike, sp.u, sp.d, n, sp.growth)
        expected = params.n_shares / (params.n_shares + params.m_warrants) * call
        got = price_classical_warrant(lat).w[0, 0]
        assert got == pytest.approx(expected, rel=1e-9, abs=1e-300), params


# 5: bounds for every selector


def test_criterion_5_bounds_for_every_selector(chain7_params, two_step_params):
    rng = np.random.default_rng(5)
    cases = [(chain7_params, 1.1), (two_step_params, 1.1)] + [(random_market(rng), None) for _ in range(6)]
    violations = checked = 0
    for params, u in cases:
        for n in range(1, 13):
            lat = build_lattice(params, n, u=u)
            surf = price_classical_warrant(lat)
            bounds = compute_bounds(lat, surf)
            for policy in POLICIES:
                aug = build_augmented(surf, SelectorPolicy.parse(policy))
                for t in range(n + 1):
                    for j in range(t + 1):
                        for h in (0, 1):
                            value = aug.s_wl[t, j, h]
                            if np.isnan(value):
                                continue
                            checked += 1
                            lo, hi = surf.s_w[t, j], surf.s[t, j]
                            violations += not (lo <= value <= hi)
                            violations += not bounds.contains(NodeIndex.from_j(t, j), value, tol=0)
    assert checked > 0
    assert violations == 0


# 6: oracle equivalence


def test_criterion_6_grid_engine_matches_brute_force():
    rng = np.random.default_rng(66)
    grid = [-0.6, -0.25, 0.0, 0.15, 0.5]
    for _ in range(20):
        params = random_market(rng)
        n = int(rng.integers(2, 5))
        policy = SelectorPolicy.parse(str(rng.choice(POLICIES)))
        tree = TradingTree.from_augmented(build_augmented(price_classical_warrant(build_lattice(params, n)), policy))
        u, p = UtilityFunction(float(rng.uniform(0.2, 2.0))), float(rng.uniform(0.2, 0.8))
        res = indifference_price(tree, u, p, delta_grid=grid)
        assert res.clamp_events == 0
        assert res.price == pytest.approx(brute_indifference(tree, u, p, grid), abs=1e-9)


def test_criterion_6_feasibility_oracle(two_step_params, steps_params):
    rng = np.random.default_rng(6)
    certified = [certify_no_martingale(two_step_params, 2, u=1.1), certify_no_martingale(steps_params, 135)]
    for _ in range(20):
        params = random_market(rng)
        if params.m_warrants == 0:
            continue
        cert = certify_no_martingale(params, int(rng.integers(2, 12)), u=float(rng.uniform(1.05, 1.3)))
        if cert.holds:
            certified.append(cert)
    assert len(certified) >= 3
    for cert in certified:
        assert not martingale_feasibility(cert.scenarios)
    for _ in range(10):
        params = random_market(rng, m_max=0)
        for policy in POLICIES:
            aug = build_augmented(price_classical_warrant(build_lattice(params, int(rng.integers(1, 8)))),
                                  SelectorPolicy.parse(policy))
            assert tree_is_martingale(aug)


# 7: degenerate cases


@pytest.mark.parametrize("policy", POLICIES)
def test_criterion_7_no_warrants_is_plain_knock_in_call(policy):
    params = MarketParams(1000, 10, 0, 95, 105, 1, 0.2)
    n, p = 6, 0.55
    res = price_threshold_warrant(params, n, SelectorPolicy.parse(policy), p=p)
    sp = build_lattice(params, n).spec
    call = lambda s: max(s - params.strike, 0.0)
    u = UtilityFunction(1.0)
    knock_in = indifference_price(plain_stock_tree(100, sp.u, sp.d, n, call, sp.growth - 1, params.threshold), u, p)
    vanilla = indifference_price(plain_stock_tree(100, sp.u, sp.d, n, call, sp.growth - 1), u, p)
    assert res.threshold.price == pytest.approx(knock_in.price, abs=1e-9)
    assert res.classical.price == pytest.approx(vanilla.price, abs=1e-9)
    for r in (res.threshold, res.classical, knock_in, vanilla):
        assert r.clamp_events == 0


@pytest.mark.parametrize("shift", [-2.0, 0.5, 3.0])
def test_criterion_7_cash_translation(two_step_params, shift):
    tol_w = 1e-6
    tree = TradingTree.from_augmented(
        build_augmented(price_classical_warrant(build_lattice(two_step_params, 2, u=1.1)), SelectorPolicy())
    )
    u = UtilityFunction(1.0)
    for limits in (TradeLimits(), TradeLimits(-0.3, 0.3)):
        base = indifference_price(tree, u, 0.5, limits=limits, tol_w=tol_w)
        moved = indifference_price(tree.with_payoff(tree.payoff + shift), u, 0.5, limits=limits, tol_w=tol_w)
        assert moved.price - base.price == pytest.approx(shift, abs=tol_w)
        assert base.clamp_events == 0 and moved.clamp_events == 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
