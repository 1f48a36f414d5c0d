import math

import numpy as np
import pytest

from threshold_warrants import (
    MarketParams, SelectorPolicy, TradingTree, UtilityFunction, ValidationError, build_augmented,
    build_lattice, certify_no_martingale, indifference_price, plain_stock_tree,
    price_classical_warrant,
)
from threshold_warrants.oracle import (
    brute_expected_utility, brute_indifference, conditional_expectation, enumerate_paths,
    martingale_feasibility, replication_price, tree_is_martingale,
)

CLAIM_DELTA = -(math.log(3 / 7) + 10) / 20
FREE_DELTA = -math.log(3 / 7) / 20


def _aug(params, n, policy="expected", u=None):
    return build_augmented(price_classical_warrant(build_lattice(params, n, u=u)), SelectorPolicy.parse(policy))


def test_paths_one_step(two_step_params):
    paths = enumerate_paths(build_lattice(two_step_params, 1, u=1.1), p=0.3)
    assert sorted(p.probability for p in paths) == pytest.approx([0.3, 0.7])


def test_paths_two_step(two_step_params):
    lat = build_lattice(two_step_params, 2, u=1.1)
    paths = enumerate_paths(lat)
    assert len(paths) == 4
    assert sum(p.probability for p in paths) == pytest.approx(1.0)
    aug = _aug(two_step_params, 2, "upper", 1.1)
    up = lat.spec.q
    node = paths[0].nodes()[1]

    def hit_share(n):
        return aug.s_wl[2, n.j, 1]

    assert conditional_expectation(lat, node, lambda n: lat.value(n) / two_step_params.n_shares) == pytest.approx(110)
    e_hit = up * hit_share(node.up()) + (1 - up) * hit_share(node.down())
    assert e_hit == pytest.approx(106.54, abs=0.05)


def test_paths_step_cap(chain7_params):
    with pytest.raises(ValidationError):
        enumerate_paths(build_lattice(chain7_params, 13))


def test_firm_value_is_q_martingale(chain7_params):
    lat = build_lattice(chain7_params, 8)
    root = next(lat.nodes())
    growth = lat.spec.growth ** lat.n_steps
    assert conditional_expectation(lat, root, lat.value) / growth == pytest.approx(chain7_params.x0, rel=1e-12)


def test_brute_one_period_example():
    tree = plain_stock_tree(100, 1.1, 0.9, 1, lambda s: max(s - 100, 0.0))
    grid = [-1.0, CLAIM_DELTA, 0.0, FREE_DELTA, 1.0]
    assert brute_indifference(tree, UtilityFunction(1.0), 0.7, grid) == pytest.approx(5.0, abs=1e-9)


def test_brute_zero_claim():
    tree = plain_stock_tree(100, 1.1, 0.9, 2, lambda s: 0.0)
    assert brute_indifference(tree, UtilityFunction(1.0), 0.6, [-0.5, 0.0, 0.5]) == pytest.approx(0.0, abs=1e-10)


def test_brute_caps_steps():
    tree = plain_stock_tree(100, 1.1, 0.9, 5, lambda s: 0.0)
    with pytest.raises(ValidationError):
        brute_expected_utility(tree, UtilityFunction(1.0), 0.5, [0.0], 0.0)


def test_brute_matches_grid_engine_on_random_tree():
    rng = np.random.default_rng(7)
    steps = 2
    prices = np.full((steps + 1, steps + 1), np.nan)
    for t in range(steps + 1):
        prices[t, : t + 1] = 100 * np.exp(np.sort(rng.normal(0, 0.1, t + 1)))
    tree = TradingTree.from_prices(prices, 1.0, rng.uniform(0, 10, steps + 1), barrier=prices[1, 1])
    grid = [-0.8, -0.2, 0.0, 0.3, 0.7]
    u = UtilityFunction(0.6)
    dp = indifference_price(tree, u, 0.45, delta_grid=grid, tol_w=1e-10).price
    assert dp == pytest.approx(brute_indifference(tree, u, 0.45, grid), abs=1e-9)


def test_feasibility_of_certified_witnesses(two_step_params, steps_params):
    assert not martingale_feasibility(certify_no_martingale(two_step_params, 2, u=1.1).scenarios)
    assert not martingale_feasibility(certify_no_martingale(steps_params, 135).scenarios)


def test_no_warrant_tree_is_martingale():
    params = MarketParams(1000, 10, 0, 95, 105, 1, 0.2)
    assert tree_is_martingale(_aug(params, 6))


def test_threshold_tree_is_not_martingale(two_step_params):
    assert not tree_is_martingale(_aug(two_step_params, 2, "upper", 1.1))


def test_replication_rejects_arbitrage():
    tree = plain_stock_tree(100, 1.1, 0.9, 1, lambda s: s, r_step=0.2)
    with pytest.raises(ValidationError, match="arbitrage"):
        replication_price(tree)
