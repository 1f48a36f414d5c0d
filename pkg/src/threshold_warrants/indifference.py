"""Utility-indifference prices by backward dynamic programming over a wealth grid.

The investor holds cash and trades ``delta`` shares of one asset per step within
``TradeLimits``. A claim paying ``payoff`` at maturity is priced as the smallest initial
wealth that, without the claim, reaches the expected utility of holding the claim with
zero wealth.

Values are stored as ``psi = log(-gamma * phi)``. For exponential utility ``psi`` is
affine in wealth on every fiber, so the default log-domain interpolation is exact.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Any, Callable

import numpy as np

from . import _kernels
from .arbitrage import ArbitrageCertificate, certify_on
from .classical import WarrantSurface, price_classical_warrant
from .lattice import build_lattice
from .market import MarketParams, NumericalError, ValidationError, warrant_payoff
from .threshold import AugmentedLattice, SelectorPolicy, TradeLimits, build_augmented, terminal_claims

log = logging.getLogger(__name__)

INTERPOLATIONS = ("log", "linear")
DELTA_TOL = 1e-8
MAX_TRADE_BOUND = 2.0**40


@dataclass(frozen=True)
class UtilityFunction:
    """Exponential utility ``u(x) = -exp(-gamma x) / gamma``."""

    gamma: float = 1.0
    kind: str = "exponential"

    def __post_init__(self) -> None:
        if self.kind != "exponential":
            raise ValidationError(f"only exponential utility is implemented, got {self.kind!r}")
        if not self.gamma > 0:
            raise ValidationError(f"risk aversion gamma must be positive, got {self.gamma}")

    def __call__(self, x):
        return -np.exp(-self.gamma * np.asarray(x, dtype=float)) / self.gamma

    def to_log(self, x):
        """log(-gamma * u(x))."""
        return -self.gamma * np.asarray(x, dtype=float)

    def from_log(self, psi):
        return -np.exp(psi) / self.gamma


@dataclass(frozen=True, eq=False)
class TradingTree:
    """Traded-asset prices over (t, j, hit) states and the claim paid at maturity."""

    price: np.ndarray  # [t, j, hit]
    child_hit: np.ndarray  # hit state handed to both children, [t, j, hit], t < n
    reachable: np.ndarray  # [t, j, hit]
    payoff: np.ndarray  # [j, hit]
    growth: float  # one-step cash growth factor
    threshold: float = math.inf

    def __post_init__(self) -> None:
        n = self.price.shape[0] - 1
        if self.price.shape != (n + 1, n + 1, 2) or self.reachable.shape != (n + 1, n + 1, 2):
            raise ValidationError("price and reachable must have shape (n+1, n+1, 2)")
        if self.child_hit.shape != (n, n + 1, 2) or self.payoff.shape != (n + 1, 2):
            raise ValidationError("child_hit must be (n, n+1, 2) and payoff (n+1, 2)")
        if not self.growth > 0:
            raise ValidationError(f"growth factor must be positive, got {self.growth}")
        if not np.all(np.isfinite(self.payoff[self.reachable[n, : n + 1]])):
            raise ValidationError("claim payoff must be finite on every reachable terminal state")

    @property
    def n_steps(self) -> int:
        return self.price.shape[0] - 1

    def with_payoff(self, payoff: np.ndarray) -> TradingTree:
        return replace(self, payoff=np.asarray(payoff, dtype=float))

    @property
    def root_hit(self) -> bool:
        return bool(self.reachable[0, 0, 1])

    def terminal_range(self) -> tuple[float, float]:
        n = self.n_steps
        vals = self.payoff[self.reachable[n, : n + 1]]
        return float(vals.min()), float(vals.max())

    @classmethod
    def from_augmented(cls, aug: AugmentedLattice, payoff: np.ndarray | None = None) -> TradingTree:
        """Trade the threshold-aware share price; the claim defaults to the gated warrant."""
        return cls(
            price=aug.s_wl, child_hit=aug.child_hit, reachable=aug.reachable,
            payoff=terminal_claims(aug) if payoff is None else np.asarray(payoff, dtype=float),
            growth=aug.lattice.spec.growth, threshold=aug.threshold,
        )

    @classmethod
    def from_prices(
        cls, prices: np.ndarray, growth: float, payoff: np.ndarray, barrier: float | None = None
    ) -> TradingTree:
        """Tree from a [t, j] price array.

        Without a barrier the hit flag stays false. With one, it turns true for the children
        of any state whose price is at or above the barrier. A 1-d ``payoff`` is paid in both
        hit states unless a barrier is given, in which case it is paid only once hit.
        """
        n = prices.shape[0] - 1
        price = np.repeat(prices[:, :, None], 2, axis=2)
        child_hit = np.zeros((n, n + 1, 2), dtype=bool)
        reachable = np.zeros((n + 1, n + 1, 2), dtype=bool)
        reachable[0, 0, 0] = True
        for t in range(n):
            if barrier is not None:
                child_hit[t, : t + 1, 1] = True
                child_hit[t, : t + 1, 0] = prices[t, : t + 1] >= barrier
            for j in range(t + 1):
                for h in (0, 1):
                    if reachable[t, j, h]:
                        h2 = int(child_hit[t, j, h])
                        reachable[t + 1, j : j + 2, h2] = True
        payoff = np.asarray(payoff, dtype=float)
        if payoff.ndim == 1:
            payoff = np.stack([np.zeros_like(payoff) if barrier is not None else payoff, payoff], axis=1)
        return cls(
            price=price, child_hit=child_hit, reachable=reachable, payoff=payoff, growth=growth,
            threshold=math.inf if barrier is None else barrier,
        )

    @classmethod
    def from_surface(cls, surface: WarrantSurface) -> TradingTree:
        """Classical world: the share trades at ``s_w`` and the warrant is always exercisable."""
        lat = surface.lattice
        n = lat.n_steps
        payoff = np.array([warrant_payoff(x, lat.params) for x in lat.values[n, : n + 1]])
        return cls.from_prices(surface.s_w, lat.spec.growth, payoff)


def plain_stock_tree(
    s0: float,
    up: float,
    down: float,
    n_steps: int,
    payoff_fn: Callable[[float], float],
    r_step: float = 0.0,
    barrier: float | None = None,
) -> TradingTree:
    """Recombining stock tree ``s0 * up^j * down^(t-j)`` with a claim ``payoff_fn(S_T)``.

    With ``barrier`` the claim is knocked in once a price at steps 0..n-1 reaches it.
    """
    if not s0 > 0 or not 0 < down < up:
        raise ValidationError(f"need s0 > 0 and 0 < down < up, got s0={s0}, up={up}, down={down}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValidationError(f"n_steps must be a positive integer, got {n_steps}")
    n = int(n_steps)
    prices = np.full((n + 1, n + 1), np.nan)
    for t in range(n + 1):
        j = np.arange(t + 1)
        prices[t, : t + 1] = s0 * up**j * down ** (t - j)
    payoff = np.array([payoff_fn(s) for s in prices[n]], dtype=float)
    return TradingTree.from_prices(prices, 1.0 + r_step, payoff, barrier=barrier)


@dataclass(frozen=True)
class WealthGrid:
    w_min: float
    w_max: float
    size: int

    def __post_init__(self) -> None:
        if not self.w_max > self.w_min or self.size < 2:
            raise ValidationError(f"bad wealth grid [{self.w_min}, {self.w_max}] x {self.size}")

    @property
    def step(self) -> float:
        return (self.w_max - self.w_min) / (self.size - 1)

    @property
    def points(self) -> np.ndarray:
        return self.w_min + self.step * np.arange(self.size)


def wealth_step(w, delta, s_now, s_next, r_step: float = 0.0):
    """Self-financing update: buy ``delta`` shares, carry the rest as cash for one step."""
    return (w - delta * s_now) * (1.0 + r_step) + delta * s_next


def _interp(row: np.ndarray, grid: WealthGrid, w, log_mode: bool):
    x = np.clip((np.asarray(w, dtype=float) - grid.w_min) / grid.step, 0.0, grid.size - 1.0)
    k = np.minimum(x.astype(np.int64), grid.size - 2)
    f = x - k
    a, b = row[k], row[k + 1]
    if log_mode:
        return a + f * (b - a)
    m = np.maximum(a, b)
    return m + np.log((1.0 - f) * np.exp(a - m) + f * np.exp(b - m))


@dataclass(frozen=True, eq=False)
class ValueSurface:
    """phi over (t, j, hit, wealth index), stored as log(-gamma * phi)."""

    tree: TradingTree
    utility: UtilityFunction
    p: float
    a: float
    b: float
    grids: tuple[WealthGrid, ...]
    psi: tuple[np.ndarray, ...]  # psi[t] has shape (t+1, 2, G)
    delta: tuple[np.ndarray, ...]  # optimal position, t < n
    interpolation: str
    clamp_events: int

    def log_value(self, t: int, j: int, hit: bool, w) -> Any:
        return _interp(self.psi[t][j, int(hit)], self.grids[t], w, self.interpolation == "log")

    def phi(self, t: int, j: int, hit: bool, w) -> Any:
        return self.utility.from_log(self.log_value(t, j, hit, w))

    def phi_grid(self, t: int) -> np.ndarray:
        return self.utility.from_log(self.psi[t])

    def delta_star(self, t: int, j: int, hit: bool, w) -> Any:
        grid = self.grids[t]
        return np.interp(w, grid.points, self.delta[t][j, int(hit)])


def optimize_delta(
    wealth: float,
    s_now: float,
    s_up: float,
    s_down: float,
    limits: TradeLimits,
    continuation_up: Callable[[float], float],
    continuation_down: Callable[[float], float],
    p: float,
    r_step: float = 0.0,
    delta_grid=None,
    tol: float = DELTA_TOL,
) -> tuple[float, float]:
    """Maximise ``p * V_up(w_up) + (1 - p) * V_down(w_down)`` over the position.

    Same search as the grid engine: a 33-point scan, then golden section on the bracket
    around the best scan point. Unbounded limits are widened until the optimum is interior.
    """

    def value(delta: float) -> float:
        wu = wealth_step(wealth, delta, s_now, s_up, r_step)
        wd = wealth_step(wealth, delta, s_now, s_down, r_step)
        return p * continuation_up(wu) + (1.0 - p) * continuation_down(wd)

    if delta_grid is not None:
        vals = [value(d) for d in delta_grid]
        k = int(np.argmax(vals))
        return float(delta_grid[k]), float(vals[k])

    def search(a: float, b: float) -> tuple[float, float]:
        if a == b:
            return a, value(a)
        h = (b - a) / (_kernels.N_SCAN - 1)
        scan = [value(a + h * i) for i in range(_kernels.N_SCAN)]
        k = int(np.argmax(scan))
        best_d, best_v = a + h * k, scan[k]
        lo = a + h * min(max(k - 1, 0), _kernels.N_SCAN - 3)
        dist = 2.0 * h
        c, d = lo + _kernels.INV_PHI2 * dist, lo + _kernels.INV_PHI * dist
        fc, fd = value(c), value(d)
        for _ in range(_kernels.golden_iterations(dist, tol)):
            dist *= _kernels.INV_PHI
            if fc > fd:
                d, fd = c, fc
                c = lo + _kernels.INV_PHI2 * dist
                fc = value(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + _kernels.INV_PHI * dist
                fd = value(d)
        mid = lo + 0.5 * dist
        if value(mid) > best_v:
            best_d, best_v = mid, value(mid)
        return best_d, best_v

    if limits.bounded:
        return search(limits.a, limits.b)
    bound = 1.0
    while bound <= MAX_TRADE_BOUND:
        a, b = max(limits.a, -bound), min(limits.b, bound)
        d, v = search(a, b)
        if _interior(np.array([d]), a, b, limits):
            return d, v
        bound *= 4.0
    raise NumericalError("optimal position is unbounded; the one-step prices admit arbitrage")


def _interior(delta, a: float, b: float, limits: TradeLimits) -> bool:
    """True unless an optimum sits in the outer half of a side cut by the working bound."""
    vals = np.concatenate([np.ravel(d) for d in delta]) if isinstance(delta, list) else np.ravel(delta)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return True
    if a > limits.a and vals.min() < 0.5 * a:
        return False
    if b < limits.b and vals.max() > 0.5 * b:
        return False
    return True


def _wealth_grids(tree: TradingTree, a: float, b: float, w0: tuple[float, float], points: int) -> list[WealthGrid]:
    """Slices of wealth reachable from ``w0`` with positions in [a, b], padded slightly."""
    g = tree.growth
    lo, hi = w0
    grids = []
    n = tree.n_steps
    for t in range(n + 1):
        pad = 1e-9 * max(1.0, abs(lo), abs(hi))
        lo, hi = lo - pad, hi + pad
        grids.append(WealthGrid(lo, hi, points))
        if t == n:
            break
        js, hs = np.nonzero(tree.reachable[t, : t + 1])
        P = tree.price[t, js, hs]
        h2 = tree.child_hit[t, js, hs].astype(int)
        gains = np.concatenate([tree.price[t + 1, js + 1, h2] - P * g, tree.price[t + 1, js, h2] - P * g])
        moves = np.concatenate([a * gains, b * gains])
        lo, hi = lo * g + moves.min(), hi * g + moves.max()
    return grids


def _sweep(tree, utility, p, a, b, grids, log_mode, delta_grid, use_numba):
    n = tree.n_steps
    G = grids[0].size
    psi = [None] * (n + 1)
    delta = [None] * n
    w_T = grids[n].points
    psi[n] = np.full((n + 1, 2, G), np.nan)
    for h in (0, 1):
        ok = tree.reachable[n, : n + 1, h]
        psi[n][ok, h] = utility.to_log(w_T[None, :] + tree.payoff[ok, h][:, None])
    clamps = 0
    for t in range(n - 1, -1, -1):
        nxt = grids[t + 1]
        psi_next = np.nan_to_num(psi[t + 1], nan=0.0)
        psi[t], delta[t], c = _kernels.sweep_slice(
            grids[t].points, tree.price[t, : t + 1], tree.price[t + 1, : t + 2],
            tree.child_hit[t, : t + 1], tree.reachable[t, : t + 1], psi_next,
            nxt.w_min, nxt.step, tree.growth, p, a, b, delta_grid, log_mode, DELTA_TOL,
            use_numba=use_numba,
        )
        clamps += c
    return psi, delta, clamps


def value_surface(
    tree: TradingTree,
    utility: UtilityFunction,
    p: float,
    limits: TradeLimits | None = None,
    grid_points: int = 801,
    w_range: tuple[float, float] | None = None,
    interpolation: str = "log",
    delta_grid=None,
    use_numba: bool | None = None,
) -> ValueSurface:
    """Backward sweep from maturity, where phi = u(w + payoff).

    ``w_range`` is the root wealth interval the surface must cover; by default it spans 0
    and the discounted claim range. Unbounded limits start at +/-1 share and are widened
    until every optimal position is well inside them.
    """
    if limits is None:
        limits = TradeLimits()
    if not 0.0 < p < 1.0:
        raise ValidationError(f"physical up-probability must lie in (0, 1), got {p}")
    if interpolation not in INTERPOLATIONS:
        raise ValidationError(f"interpolation must be one of {INTERPOLATIONS}, got {interpolation!r}")
    if grid_points < 2:
        raise ValidationError("wealth grid needs at least 2 points")
    if w_range is None:
        w_range = _default_range(tree)
    log_mode = interpolation == "log"
    if delta_grid is not None:
        delta_grid = np.asarray(delta_grid, dtype=float)
        if delta_grid.ndim != 1 or delta_grid.size == 0:
            raise ValidationError("delta grid must be a non-empty 1-d sequence")
        if delta_grid.min() < limits.a or delta_grid.max() > limits.b:
            raise ValidationError("delta grid must lie inside the trade limits")
        a, b = float(delta_grid.min()), float(delta_grid.max())
    else:
        delta_grid = np.empty(0)

    bound = 1.0
    while True:
        if delta_grid.size or limits.bounded:
            lo_d, hi_d = (a, b) if delta_grid.size else (limits.a, limits.b)
        else:
            lo_d, hi_d = max(limits.a, -bound), min(limits.b, bound)
        grids = _wealth_grids(tree, lo_d, hi_d, w_range, grid_points)
        psi, delta, clamps = _sweep(tree, utility, p, lo_d, hi_d, grids, log_mode, delta_grid, use_numba)
        if delta_grid.size or limits.bounded or _interior(delta, lo_d, hi_d, limits):
            break
        bound *= 4.0
        if bound > MAX_TRADE_BOUND:
            raise NumericalError("optimal position is unbounded; the traded prices admit arbitrage")
    if clamps:
        log.warning("%d wealth excursions left the grid and were clamped", clamps)
    return ValueSurface(
        tree=tree, utility=utility, p=p, a=lo_d, b=hi_d, grids=tuple(grids), psi=tuple(psi),
        delta=tuple(delta), interpolation=interpolation, clamp_events=clamps,
    )


def _default_range(tree: TradingTree) -> tuple[float, float]:
    cmin, cmax = tree.terminal_range()
    disc = tree.growth ** -tree.n_steps
    pad = 0.01 * max(1.0, cmax - cmin)
    return min(0.0, cmin * disc) - pad, max(0.0, cmax * disc) + pad


@dataclass(frozen=True)
class IndifferenceResult:
    price: float
    phi_with_claim: float  # phi(0, C) at the root
    phi_breakeven: float  # phi(price, 0) at the root
    clamp_events: int
    runtime_ms: float
    delta_star: float  # optimal root position when holding the claim with zero wealth
    bracket: tuple[float, float]

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["bracket"] = list(self.bracket)
        return out


def indifference_price(
    tree: TradingTree,
    utility: UtilityFunction,
    p: float,
    limits: TradeLimits | None = None,
    grid_points: int = 801,
    tol_w: float = 1e-6,
    interpolation: str = "log",
    delta_grid=None,
    use_numba: bool | None = None,
) -> IndifferenceResult:
    """Smallest root wealth ``w0`` with phi(w0, 0) >= phi(0, C).

    Bisection runs on the claim-free root fiber until the bracket is narrower than
    ``tol_w``; a final secant step inside the bracket removes the bisection bias, which
    is exact when the fiber is affine.
    """
    started = time.perf_counter()
    if not tol_w > 0:
        raise ValidationError(f"tol_w must be positive, got {tol_w}")
    cmin, cmax = tree.terminal_range()
    disc = tree.growth ** -tree.n_steps
    pad = 0.01 * max(1.0, cmax - cmin)
    lo, hi = cmin * disc - pad, cmax * disc + pad
    w_range = (min(0.0, lo), max(0.0, hi))
    kw = dict(limits=limits, grid_points=grid_points, w_range=w_range,
              interpolation=interpolation, delta_grid=delta_grid, use_numba=use_numba)
    with_claim = value_surface(tree, utility, p, **kw)
    without = value_surface(tree.with_payoff(np.zeros_like(tree.payoff)), utility, p, **kw)

    h0 = tree.root_hit
    target = float(with_claim.log_value(0, 0, h0, 0.0))

    def excess(w: float) -> float:
        # positive while w0 is still too small to match the claim
        return float(without.log_value(0, 0, h0, w)) - target

    f_lo, f_hi = excess(lo), excess(hi)
    if not (f_lo > 0.0 >= f_hi):
        raise NumericalError(
            f"no indifference bracket in [{lo:.6g}, {hi:.6g}]: "
            f"log-value gaps {f_lo:.6g} and {f_hi:.6g} do not change sign"
        )
    while hi - lo > tol_w:
        mid = 0.5 * (lo + hi)
        f_mid = excess(mid)
        if f_mid > 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    price = lo + (hi - lo) * f_lo / (f_lo - f_hi) if f_lo != f_hi else hi
    clamps = with_claim.clamp_events + without.clamp_events
    return IndifferenceResult(
        price=float(price),
        phi_with_claim=float(with_claim.phi(0, 0, h0, 0.0)),
        phi_breakeven=float(without.phi(0, 0, h0, price)),
        clamp_events=int(clamps),
        runtime_ms=(time.perf_counter() - started) * 1e3,
        delta_star=float(with_claim.delta_star(0, 0, h0, 0.0)),
        bracket=(float(lo), float(hi)),
    )


@dataclass(frozen=True, eq=False)
class ThresholdPricing:
    threshold: IndifferenceResult  # gated warrant on the threshold-aware share price
    classical: IndifferenceResult  # ungated warrant on the classical diluted share price
    classical_risk_neutral: float  # w(root) from the firm-value tree
    certificate: ArbitrageCertificate | None  # None when the threshold is already met at t=0
    policy: SelectorPolicy
    p: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold_warrant": self.threshold.to_dict(),
            "classical_warrant": self.classical.to_dict(),
            "classical_risk_neutral": self.classical_risk_neutral,
            "selector": str(self.policy),
            "p_physical": self.p,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
        }


def price_threshold_warrant(
    params: MarketParams,
    n_steps: int,
    policy: SelectorPolicy | None = None,
    utility: UtilityFunction | None = None,
    limits: TradeLimits | None = None,
    p: float | None = None,
    u: float | None = None,
    grid_points: int = 801,
    tol_w: float = 1e-6,
    interpolation: str = "log",
    use_numba: bool | None = None,
) -> ThresholdPricing:
    """Per-warrant indifference price of a threshold warrant, plus the classical comparison.

    ``p`` is the physical up-probability; it defaults to the lattice's risk-neutral ``q``.
    """
    policy = policy or SelectorPolicy()
    utility = utility or UtilityFunction()
    lattice = build_lattice(params, n_steps, u=u)
    if p is None:
        p = lattice.spec.q
        log.warning("p_physical not set; using the risk-neutral q = %.6g as the physical probability", p)
    surface = price_classical_warrant(lattice)
    aug = build_augmented(surface, policy)
    kw = dict(limits=limits, grid_points=grid_points, tol_w=tol_w,
              interpolation=interpolation, use_numba=use_numba)
    gated = indifference_price(TradingTree.from_augmented(aug), utility, p, **kw)
    classical = indifference_price(TradingTree.from_surface(surface), utility, p, **kw)
    met = params.threshold * params.n_shares <= params.x0
    return ThresholdPricing(
        threshold=gated, classical=classical,
        classical_risk_neutral=float(surface.w[0, 0]),
        certificate=None if met else certify_on(lattice, surface), policy=policy, p=float(p),
    )
