"""Witnesses that the threshold-warrant share price cannot be a martingale.

Two independent routes produce a certificate:

* ``chain``: a measure-free argument along an all-uptick path inside a subtree where
  exercise is certain once the right is granted. Only valid at zero interest rate.
* ``expectation``: with the firm value tradeable, the one-step measure is pinned to
  the tree's risk-neutral ``q``. A consistent pre-threshold price is then unique
  wherever it exists, and the check finds the nodes where none exists.

Inequality ids used in witnesses and transcripts:

``down-step-dominance``
    S(m-1, t+1) > S_W(m+1, t+1): one downtick from the first threshold-crossing node
    still beats the diluted price one uptick up.
``straddle``
    S > L > S_W at the offset node on the all-uptick path.
``propagated-dominance``
    down-step-dominance shifted by m' upticks.
``threshold-above-diluted-up``
    L > S_W one uptick above the offset node, so a hit there has both children below.
``terminal-undiluted-above``
    at least one offset, and the down child at maturity is undiluted and above L, so a
    miss at the last monitoring step has both children above.
``expectation-mismatch``
    the q-expectation of next-step prices matches neither the hit nor the miss case.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .classical import WarrantSurface, certain_exercise, price_classical_warrant
from .lattice import Lattice, LatticeSpec, NodeIndex, build_lattice
from .market import MarketParams, ValidationError

TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PriceBounds:
    lower: np.ndarray  # s_w, [t, j]
    upper: np.ndarray  # s, [t, j]

    def at(self, node: NodeIndex) -> tuple[float, float]:
        return float(self.lower[node.t, node.j]), float(self.upper[node.t, node.j])

    def contains(self, node: NodeIndex, value: float, tol: float = 1e-12) -> bool:
        lo, hi = self.at(node)
        scale = tol * max(1.0, abs(hi))
        return lo - scale <= value <= hi + scale


def compute_bounds(lattice: Lattice, surface: WarrantSurface) -> PriceBounds:
    if surface.lattice is not lattice:
        raise ValidationError("warrant surface was built on a different lattice")
    return PriceBounds(lower=surface.s_w, upper=surface.s)


def critical_upticks(params: MarketParams, spec: LatticeSpec) -> tuple[int, float]:
    """Smallest uptick count m with X0 u^m / N > L, and the fractional gap delta_n.

    ``X0 u^m = L N u^delta_n``. At an exact tie (u^k = L N / X0) this returns
    ``(k, 0.0)``, the boundary case that certificates mark inconclusive.
    """
    ratio = params.threshold * params.n_shares / params.x0
    if not ratio > 1.0:
        raise ValidationError(
            f"threshold {params.threshold} must exceed the initial undiluted price "
            f"{params.x0 / params.n_shares}"
        )
    real = math.log(ratio) / math.log(spec.u)
    nearest = round(real)
    if nearest >= 1 and abs(real - nearest) < TIE_TOL:
        return int(nearest), 0.0
    m = math.floor(real) + 1
    delta = m - real
    assert 0.0 <= delta < 1.0
    return m, delta


@dataclass(frozen=True)
class InequalityCheck:
    id: str
    holds: bool
    lhs: float
    rhs: float
    nodes: tuple[tuple[int, int], ...]  # (tau, t) pairs involved

    def describe(self) -> str:
        rel = ">" if self.holds else "<="
        where = ", ".join(f"({tau:+d},{t})" for tau, t in self.nodes)
        return f"[{self.id}] {self.lhs:.6g} {rel} {self.rhs:.6g} at {where}"


def _node(lattice: Lattice, tau: int, t: int) -> NodeIndex:
    try:
        node = NodeIndex(t, tau)
    except ValidationError:
        raise ValidationError(f"no node with tau={tau} at t={t}")
    if t > lattice.n_steps:
        raise ValidationError(f"node (tau={tau}, t={t}) beyond lattice depth {lattice.n_steps}")
    return node


def check_down_step_dominance(
    lattice: Lattice, surface: WarrantSurface, m: int, t: int
) -> InequalityCheck:
    """Whether S(m-1, t+1) exceeds the diluted price S_W(m+1, t+1).

    Requires the subtree at (m, t) to be one where exercise is certain once granted,
    so the diluted side is the closed form (X + D M K) / (N + M).
    """
    p = lattice.params
    at = _node(lattice, m, t)
    down, up = _node(lattice, m - 1, t + 1), _node(lattice, m + 1, t + 1)
    if not certain_exercise(lattice, at):
        raise ValidationError(f"exercise is not certain below node (tau={m}, t={t})")
    lhs = lattice.value(at) * lattice.spec.d / p.n_shares
    disc = math.exp(-p.rate * (p.maturity - lattice.time(t + 1)))
    rhs = (lattice.value(up) + disc * p.m_warrants * p.strike) / (p.n_shares + p.m_warrants)
    assert math.isclose(rhs, surface.s_w[up.t, up.j], rel_tol=1e-9)
    assert math.isclose(lhs, surface.s[down.t, down.j], rel_tol=1e-12)
    return InequalityCheck("down-step-dominance", lhs > rhs, lhs, rhs, ((m - 1, t + 1), (m + 1, t + 1)))


@dataclass(frozen=True)
class OffsetCheck:
    offset: int
    checks: tuple[InequalityCheck, ...]

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.checks)


def propagate_upticks(
    lattice: Lattice, surface: WarrantSurface, m: int, t: int, m_prime: int
) -> list[OffsetCheck]:
    """Checks along the all-uptick path from (m, t) for offsets 0..m_prime.

    When ``t + m_prime + 1`` is the maturity step, the last offset also carries the
    ``terminal-undiluted-above`` check.
    """
    p = lattice.params
    n = lattice.n_steps
    if p.rate != 0.0:
        raise ValidationError("the uptick chain is only valid at zero interest rate")
    if m_prime < 0 or t + m_prime + 1 > n:
        raise ValidationError(f"offsets up to {m_prime} from t={t} overrun maturity {n}")
    _node(lattice, m, t)
    L = p.threshold
    s, s_w = surface.s, surface.s_w
    out = []
    for k in range(m_prime + 1):
        here = _node(lattice, m + k, t + k)
        up = _node(lattice, m + k + 1, t + k + 1)
        down = _node(lattice, m + k - 1, t + k + 1)
        s_here, sw_here = s[here.t, here.j], s_w[here.t, here.j]
        sw_up = s_w[up.t, up.j]
        checks = [
            InequalityCheck("straddle", bool(s_here > L > sw_here), s_here, sw_here, ((m + k, t + k),)),
            InequalityCheck(
                "propagated-dominance", bool(s[down.t, down.j] > sw_up),
                s[down.t, down.j], sw_up, ((m + k - 1, t + k + 1), (m + k + 1, t + k + 1)),
            ),
            InequalityCheck("threshold-above-diluted-up", bool(L > sw_up), L, sw_up, ((m + k + 1, t + k + 1),)),
        ]
        if t + k + 1 == n:
            s_down = s[down.t, down.j]
            checks.append(
                InequalityCheck(
                    "terminal-undiluted-above", bool(k >= 1 and s_down > L), s_down, L,
                    ((m + k - 1, n),),
                )
            )
        out.append(OffsetCheck(k, tuple(checks)))
    return out


def minimal_steps(params: MarketParams) -> int | None:
    """Smallest step count n for which down-step-dominance is guaranteed.

    Uses the CRR uptick ratio and a unit discount factor. Returns None when no finite
    n exists (no warrants, so nothing is diluted).
    """
    n_, m_ = params.n_shares, params.m_warrants
    if m_ == 0:
        return None
    ratio = params.strike / params.threshold
    if not ratio < 1.0:
        raise ValidationError("strike must be below the threshold")
    arg = (n_ + m_) / (n_ + m_ * ratio)
    bound = params.maturity / (math.log(arg) / (2.0 * params.sigma)) ** 2
    return math.floor(bound) + 1


@dataclass(frozen=True)
class MartingaleScenario:
    """One local case at a node: can the traded price be a one-step martingale?

    Child prices range over closed intervals; ``strict_hi`` makes the parent's upper
    bound strict (a miss means price < L). ``firm`` = (x, x_up, x_down) additionally
    requires the firm value to be a martingale, which pins the measure.
    """

    node: tuple[int, int]  # (tau, t)
    case: str  # "hit" or "miss"
    price: tuple[float, float]
    strict_hi: bool
    child_up: tuple[float, float]
    child_down: tuple[float, float]
    discount: float
    firm: tuple[float, float, float] | None = None


@dataclass
class ArbitrageCertificate:
    m: int
    delta_n: float
    boundary: bool
    t_star: int | None
    m_prime_range: list[int]
    witnesses: list[dict[str, Any]] = field(default_factory=list)
    scenarios: list[MartingaleScenario] = field(default_factory=list)
    chain_holds: bool = False
    expectation_holds: bool = False
    chain_note: str = ""
    n_steps: int = 0
    rate: float = 0.0

    @property
    def holds(self) -> bool:
        return self.chain_holds or self.expectation_holds

    @property
    def route(self) -> str | None:
        if self.chain_holds:
            return "chain"
        if self.expectation_holds:
            return "expectation"
        return None

    def expectation_witness(self) -> dict[str, Any] | None:
        for w in self.witnesses:
            if w["id"] == "expectation-mismatch":
                return w
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "delta_n": self.delta_n,
            "boundary": self.boundary,
            "t_star": self.t_star,
            "m_prime_range": self.m_prime_range,
            "n_steps": self.n_steps,
            "holds": self.holds,
            "route": self.route,
            "chain_holds": self.chain_holds,
            "expectation_holds": self.expectation_holds,
            "chain_note": self.chain_note,
            "witnesses": self.witnesses,
            "scenarios": [asdict(s) for s in self.scenarios],
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def transcript(self) -> str:
        lines = [
            f"critical upticks m = {self.m}, delta_n = {self.delta_n:.6f}"
            + (" (boundary tie: chain inconclusive)" if self.boundary else ""),
        ]
        if self.t_star is not None:
            lines.append(f"chain start t* = {self.t_star}, offsets m' in {self.m_prime_range}")
        if self.chain_note:
            lines.append(f"chain: {self.chain_note}")
        for w in self.witnesses:
            if w["id"] == "expectation-mismatch":
                tau, t = w["node"]
                lines.append(
                    f"[expectation-mismatch] at ({tau:+d},{t}): E[next | miss] = {w['e_miss']:.6g}"
                    f" needs < L = {w['threshold']:.6g}; E[next | hit] = {w['e_hit']:.6g} needs >= L"
                )
            else:
                rel = ">" if w["holds"] else "<="
                where = ", ".join(f"({tau:+d},{t})" for tau, t in w["nodes"])
                lines.append(f"[{w['id']}] {w['lhs']:.6g} {rel} {w['rhs']:.6g} at {where}")
        verdict = {
            "chain": "the share price cannot be a martingale under any measure",
            "expectation": "the share price cannot be a martingale under the firm-value measure",
            None: "no certificate: a martingale price process was not ruled out",
        }[self.route]
        lines.append(f"holds = {self.holds}: {verdict}")
        return "\n".join(lines)


def _check_dict(check: InequalityCheck, offset: int | None = None) -> dict[str, Any]:
    out = {"id": check.id, "holds": check.holds, "lhs": check.lhs, "rhs": check.rhs,
           "nodes": [list(n) for n in check.nodes]}
    if offset is not None:
        out["offset"] = offset
    return out


def _chain_scenarios(lattice: Lattice, surface: WarrantSurface, m: int, t: int) -> list[MartingaleScenario]:
    n = lattice.n_steps
    L = lattice.params.threshold
    s, s_w = surface.s, surface.s_w
    out = []
    for k in range(n - t):
        tt, j = t + k, (t + k + m + k) // 2
        hi_price = s[tt, j]
        up, dn = s_w[tt + 1, j + 1], s_w[tt + 1, j]
        out.append(MartingaleScenario(
            (m + k, tt), "hit", (max(L, s_w[tt, j]), hi_price), False,
            (up, up), (dn, dn), lattice.spec.discount,
        ))
    tt, j = n - 1, (n - 1 + m + n - 1 - t) // 2
    up, dn = s[n, j + 1], s[n, j]
    out.append(MartingaleScenario(
        (m + n - 1 - t, tt), "miss", (s_w[tt, j], min(s[tt, j], L)), True,
        (up, up), (dn, dn), lattice.spec.discount,
    ))
    return out


def _run_chain(cert: ArbitrageCertificate, lattice: Lattice, surface: WarrantSurface) -> None:
    p = lattice.params
    n = lattice.n_steps
    m = cert.m
    if p.m_warrants == 0:
        cert.chain_note = "no warrants, nothing is diluted"
        return
    if p.rate != 0.0:
        cert.chain_note = "skipped: the uptick chain is only valid at zero interest rate"
        return
    starts = [
        t for t in range(m, n - 1)
        if (t - m) % 2 == 0 and certain_exercise(lattice, NodeIndex(t, m))
    ]
    if not starts:
        cert.chain_note = "no start node with certain exercise at least two steps before maturity"
        return
    first = None
    for t in starts:
        dominance = check_down_step_dominance(lattice, surface, m, t)
        offsets = propagate_upticks(lattice, surface, m, t, n - t - 1)
        chain = [_check_dict(dominance)] + [_check_dict(c, o.offset) for o in offsets for c in o.checks]
        if dominance.holds and all(o.holds for o in offsets):
            cert.t_star = t
            cert.m_prime_range = list(range(n - t))
            cert.witnesses.extend(chain)
            cert.scenarios.extend(_chain_scenarios(lattice, surface, m, t))
            cert.chain_holds = not cert.boundary
            cert.chain_note = "verified" if not cert.boundary else "verified but inconclusive at boundary tie"
            return
        if first is None:
            first = chain
    cert.t_star = starts[0]
    cert.m_prime_range = list(range(n - starts[0]))
    cert.witnesses.extend(first)
    f = next(c for c in first if not c["holds"])
    cert.chain_note = (
        f"fails for every start time; first failure at t*={starts[0]}: [{f['id']}]"
        + (f" offset {f['offset']}" if "offset" in f else "")
    )


def consistent_miss_prices(lattice: Lattice, surface: WarrantSurface) -> np.ndarray:
    """Unique q-martingale price at nodes entered without the right, NaN where none exists.

    Entered with the right, a node trades at S_W, which is itself a discounted
    q-martingale. Entered without it, the node either meets the threshold (its price
    must then be S_W >= L) or misses (its price is the discounted q-expectation of the
    children's consistent prices and must stay below L). At most one case applies.
    """
    n = lattice.n_steps
    L = lattice.params.threshold
    q, disc = lattice.spec.q, lattice.spec.discount
    s, s_w = surface.s, surface.s_w
    c = np.full((n + 1, n + 1), np.nan)
    c[n, : n + 1] = s[n, : n + 1]
    for t in range(n - 1, -1, -1):
        for j in range(t + 1):
            if s_w[t, j] >= L:
                c[t, j] = s_w[t, j]
                continue
            e = disc * (q * c[t + 1, j + 1] + (1.0 - q) * c[t + 1, j])
            if e < L:
                c[t, j] = e
    return c


def _run_expectation(cert: ArbitrageCertificate, lattice: Lattice, surface: WarrantSurface) -> None:
    c = consistent_miss_prices(lattice, surface)
    if not np.isnan(c[0, 0]):
        return
    L = lattice.params.threshold
    q, disc = lattice.spec.q, lattice.spec.discount
    s, s_w, x = surface.s, surface.s_w, lattice.values
    t, j = 0, 0
    path = [(0, 0)]
    while True:
        if np.isnan(c[t + 1, j + 1]):
            t, j = t + 1, j + 1
        elif np.isnan(c[t + 1, j]):
            t, j = t + 1, j
        else:
            break
        path.append((2 * j - t, t))
    e_miss = disc * (q * c[t + 1, j + 1] + (1.0 - q) * c[t + 1, j])
    e_hit = disc * (q * s_w[t + 1, j + 1] + (1.0 - q) * s_w[t + 1, j])
    tau = 2 * j - t
    cert.witnesses.append({
        "id": "expectation-mismatch",
        "node": [tau, t],
        "path": [list(p) for p in path],
        "e_miss": float(e_miss),
        "e_hit": float(e_hit),
        "threshold": L,
        "price_bounds": [float(s_w[t, j]), float(s[t, j])],
    })
    firm = (float(x[t, j]), float(x[t + 1, j + 1]), float(x[t + 1, j]))
    cu, cd = float(c[t + 1, j + 1]), float(c[t + 1, j])
    swu, swd = float(s_w[t + 1, j + 1]), float(s_w[t + 1, j])
    cert.scenarios.append(MartingaleScenario(
        (tau, t), "hit", (max(L, float(s_w[t, j])), float(s[t, j])), False,
        (swu, swu), (swd, swd), disc, firm,
    ))
    cert.scenarios.append(MartingaleScenario(
        (tau, t), "miss", (float(s_w[t, j]), min(float(s[t, j]), L)), True,
        (cu, cu), (cd, cd), disc, firm,
    ))
    cert.expectation_holds = True


def certify_no_martingale(
    params: MarketParams,
    n_steps: int,
    u: float | None = None,
    allow_below_min_steps: bool = False,
) -> ArbitrageCertificate:
    """Search for a witness that the bounded share price cannot be a martingale.

    ``u`` overrides the CRR uptick ratio. With the CRR ratio, ``n_steps`` must reach
    ``minimal_steps(params)`` unless ``allow_below_min_steps`` is set.
    """
    if u is None and not allow_below_min_steps:
        n_min = minimal_steps(params)
        if n_min is not None and n_steps < n_min:
            raise ValidationError(
                f"n_steps={n_steps} is below the minimal step count {n_min}; "
                "pass allow_below_min_steps for exploratory runs"
            )
    lattice = build_lattice(params, n_steps, u=u)
    surface = price_classical_warrant(lattice)
    return certify_on(lattice, surface)


def certify_on(lattice: Lattice, surface: WarrantSurface) -> ArbitrageCertificate:
    m, delta = critical_upticks(lattice.params, lattice.spec)
    cert = ArbitrageCertificate(
        m=m, delta_n=delta, boundary=delta == 0.0, t_star=None, m_prime_range=[],
        n_steps=lattice.n_steps, rate=lattice.params.rate,
    )
    _run_chain(cert, lattice, surface)
    _run_expectation(cert, lattice, surface)
    return cert
