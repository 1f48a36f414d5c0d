"""Slow, independent reference computations used to cross-check the engines.

Nothing here shares code paths with the backward-induction or grid engines beyond the
tree inputs: paths are enumerated explicitly, the threshold flag is recomputed along
each path, and expected utility is evaluated with exact wealth.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, linprog

from .arbitrage import MartingaleScenario
from .indifference import TradingTree, UtilityFunction, wealth_step
from .lattice import Lattice, NodeIndex
from .market import ValidationError
from .threshold import AugmentedLattice

MAX_PATH_STEPS = 12
MAX_STRATEGY_STEPS = 4


@dataclass(frozen=True)
class Path:
    ups: tuple[bool, ...]
    probability: float

    def nodes(self) -> list[NodeIndex]:
        out, tau = [NodeIndex(0, 0)], 0
        for t, up in enumerate(self.ups, start=1):
            tau += 1 if up else -1
            out.append(NodeIndex(t, tau))
        return out


def enumerate_paths(lattice: Lattice, p: float | None = None, max_steps: int = MAX_PATH_STEPS) -> list[Path]:
    """All 2^n up/down paths with their probability under up-probability ``p`` (default q)."""
    n = lattice.n_steps
    if n > max_steps:
        raise ValidationError(f"path enumeration capped at {max_steps} steps, lattice has {n}")
    if p is None:
        p = lattice.spec.q
    paths = []
    for ups in itertools.product((True, False), repeat=n):
        k = sum(ups)
        paths.append(Path(ups, p**k * (1.0 - p) ** (n - k)))
    return paths


def conditional_expectation(
    lattice: Lattice, node: NodeIndex, f: Callable[[NodeIndex], float], p: float | None = None
) -> float:
    """E[f(terminal node) | path passes through ``node``], undiscounted, by path summation."""
    num = den = 0.0
    for path in enumerate_paths(lattice, p):
        nodes = path.nodes()
        if nodes[node.t] == node:
            num += path.probability * f(nodes[-1])
            den += path.probability
    if den == 0.0:
        raise ValidationError(f"node {node} is not on any path")
    return num / den


def binomial_call_price(s0: float, strike: float, u: float, d: float, n_steps: int, growth: float) -> float:
    """Closed-form European call on an n-step binomial tree."""
    q = (growth - d) / (u - d)
    total = 0.0
    for k in range(n_steps + 1):
        s_t = s0 * u**k * d ** (n_steps - k)
        if s_t > strike:
            total += math.comb(n_steps, k) * q**k * (1.0 - q) ** (n_steps - k) * (s_t - strike)
    return total / growth**n_steps


def brute_expected_utility(
    tree: TradingTree, utility: UtilityFunction, p: float, delta_grid: Sequence[float], w0: float
) -> float:
    """Best expected utility from the root, maximising separately at every path prefix."""
    n = tree.n_steps
    if n > MAX_STRATEGY_STEPS:
        raise ValidationError(f"strategy enumeration capped at {MAX_STRATEGY_STEPS} steps, tree has {n}")
    r_step = tree.growth - 1.0

    def best(t: int, j: int, hit: bool, w: float) -> float:
        if t == n:
            return float(utility(w + tree.payoff[j, int(hit)]))
        price = tree.price[t, j, int(hit)]
        nxt = hit or price >= tree.threshold
        up, down = tree.price[t + 1, j + 1, int(nxt)], tree.price[t + 1, j, int(nxt)]
        values = []
        for d in delta_grid:
            wu = wealth_step(w, d, price, up, r_step)
            wd = wealth_step(w, d, price, down, r_step)
            values.append(p * best(t + 1, j + 1, nxt, wu) + (1.0 - p) * best(t + 1, j, nxt, wd))
        return max(values)

    return best(0, 0, tree.root_hit, w0)


def brute_indifference(
    tree: TradingTree,
    utility: UtilityFunction,
    p: float,
    delta_grid: Sequence[float],
    tol: float = 1e-12,
) -> float:
    """Indifference price by root-finding on the exhaustively maximised expected utility."""
    delta_grid = list(delta_grid)
    if not delta_grid:
        raise ValidationError("brute force needs a non-empty delta grid")
    target = brute_expected_utility(tree, utility, p, delta_grid, 0.0)
    zero = tree.with_payoff(np.zeros_like(tree.payoff))
    cmin, cmax = tree.terminal_range()
    disc = tree.growth ** -tree.n_steps
    lo, hi = cmin * disc - 1.0, cmax * disc + 1.0

    def gap(w: float) -> float:
        return brute_expected_utility(zero, utility, p, delta_grid, w) - target

    if gap(lo) > 0 or gap(hi) < 0:
        raise ValidationError("no indifference bracket for the brute-force search")
    return float(brentq(gap, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


def replication_price(tree: TradingTree) -> float:
    """Cost of replicating the claim with the traded price and cash.

    One-step probabilities are implied by the traded prices themselves; the tree must be
    arbitrage-free at every reachable state.
    """
    n = tree.n_steps
    g = tree.growth
    v = np.full((n + 1, 2), np.nan)
    v[:, :] = tree.payoff
    for t in range(n - 1, -1, -1):
        nv = np.full((t + 1, 2), np.nan)
        for j in range(t + 1):
            for h in (0, 1):
                if not tree.reachable[t, j, h]:
                    continue
                h2 = int(tree.child_hit[t, j, h])
                s, su, sd = tree.price[t, j, h], tree.price[t + 1, j + 1, h2], tree.price[t + 1, j, h2]
                qi = (s * g - sd) / (su - sd)
                if not 0.0 < qi < 1.0:
                    raise ValidationError(f"traded prices admit arbitrage at (t={t}, j={j}, hit={h})")
                nv[j, h] = (qi * v[j + 1, h2] + (1.0 - qi) * v[j, h2]) / g
        v = nv
    return float(v[0, 0])


def _scenario_feasible(sc: MartingaleScenario) -> bool:
    # variables: q, P, alpha = q * P_up, beta = (1 - q) * P_down, slack s
    (p_lo, p_hi), (u_lo, u_hi), (d_lo, d_hi) = sc.price, sc.child_up, sc.child_down
    scale = max(1.0, abs(p_hi), abs(u_hi), abs(d_hi))
    A_ub = [
        [u_lo, 0, -1, 0, 0],  # alpha >= q u_lo
        [-u_hi, 0, 1, 0, 0],  # alpha <= q u_hi
        [-d_lo, 0, 0, -1, 0],  # beta >= (1 - q) d_lo
        [d_hi, 0, 0, 1, 0],  # beta <= (1 - q) d_hi
        [-1, 0, 0, 0, 1],  # q >= s
        [1, 0, 0, 0, 1],  # q <= 1 - s
        [0, -1, 0, 0, 0],  # P >= p_lo
        [0, 1, 0, 0, scale if sc.strict_hi else 0],  # P <= p_hi (- s)
    ]
    b_ub = [0, 0, -d_lo, d_hi, 0, 1, -p_lo, p_hi]
    A_eq = [[0, 1, -sc.discount, -sc.discount, 0]]
    b_eq = [0.0]
    if sc.firm is not None:
        x, xu, xd = sc.firm
        A_eq.append([sc.discount * (xu - xd), 0, 0, 0, 0])
        b_eq.append(x - sc.discount * xd)
    res = linprog(
        c=[0, 0, 0, 0, -1], A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=[(0, 1), (None, None), (None, None), (None, None), (0, 1)], method="highs",
    )
    return bool(res.status == 0 and -res.fun > 1e-12)


def martingale_feasibility(scenarios: Sequence[MartingaleScenario]) -> bool:
    """True if any listed case admits one-step martingale probabilities strictly in (0, 1).

    A certificate's scenarios are the alternative cases at its witness nodes, so the
    witness stands only when every one of them is infeasible.
    """
    return any(_scenario_feasible(sc) for sc in scenarios)


def tree_scenarios(aug: AugmentedLattice) -> list[MartingaleScenario]:
    """One exact-price scenario per reachable non-terminal state, with the firm value pinned."""
    lat = aug.lattice
    x, disc = lat.values, lat.spec.discount
    out = []
    for t in range(lat.n_steps):
        for j in range(t + 1):
            for h in (0, 1):
                if not aug.reachable[t, j, h]:
                    continue
                h2 = int(aug.child_hit[t, j, h])
                s, su, sd = aug.s_wl[t, j, h], aug.s_wl[t + 1, j + 1, h2], aug.s_wl[t + 1, j, h2]
                out.append(MartingaleScenario(
                    (2 * j - t, t), "hit" if h else "miss", (s, s), False, (su, su), (sd, sd), disc,
                    (x[t, j], x[t + 1, j + 1], x[t + 1, j]),
                ))
    return out


def tree_is_martingale(aug: AugmentedLattice) -> bool:
    """Every reachable state individually admits the firm-pinned martingale step."""
    return all(_scenario_feasible(sc) for sc in tree_scenarios(aug))
