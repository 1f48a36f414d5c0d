"""Share-price model under threshold warrants, with hit-state augmentation.

Each node carries a boolean ``hit``: whether the exercise right was granted at an
earlier step, i.e. some earlier traded price reached the threshold. A node entered
with ``hit`` trades at the classical-warrant price ``s_w``. Otherwise it trades at
the selector's price, always within ``[s_w, s]``. At maturity a node without the
right trades at the undiluted price ``s`` because the warrants lapse.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .classical import WarrantSurface
from .lattice import NodeIndex, fmt
from .market import MarketParams, ValidationError, warrant_payoff

KINDS = ("lower", "upper", "blend", "expected")


@dataclass(frozen=True)
class SelectorPolicy:
    """How the pre-threshold share price is placed inside ``[s_w, s]``.

    ``blend`` with weight ``lam`` trades at ``lam * s_w + (1 - lam) * s``. ``expected``
    uses as weight the risk-neutral probability that the threshold is met at a later
    monitoring step, computed on the tree itself.
    """

    kind: str = "expected"
    lam: float | None = None
    # probability that a trade happens at a quoted price; only 1 is modelled
    trade_probability: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown selector {self.kind!r}; expected one of {KINDS}")
        if self.kind == "blend":
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ValidationError(f"blend weight must lie in [0, 1], got {self.lam}")
        elif self.lam is not None:
            raise ValidationError(f"selector {self.kind} takes no weight")
        if self.trade_probability != 1.0:
            raise ValidationError("only trade_probability = 1 is supported")

    @classmethod
    def parse(cls, text: str) -> SelectorPolicy:
        text = str(text).strip()
        if text.startswith("blend:"):
            try:
                lam = float(text.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad blend weight in selector {text!r}")
            return cls("blend", lam)
        if text == "blend":
            raise ValidationError("selector blend needs a weight, e.g. blend:0.5")
        return cls(text)

    def __str__(self) -> str:
        return f"blend:{self.lam:g}" if self.kind == "blend" else self.kind

    def weight(self, hit_prob):
        """Weight on ``s_w``; ``hit_prob`` is only used by the expected selector."""
        if self.kind == "lower":
            return np.ones_like(hit_prob) if isinstance(hit_prob, np.ndarray) else 1.0
        if self.kind == "upper":
            return np.zeros_like(hit_prob) if isinstance(hit_prob, np.ndarray) else 0.0
        if self.kind == "blend":
            return np.full_like(hit_prob, self.lam) if isinstance(hit_prob, np.ndarray) else self.lam
        return hit_prob

    def price(self, s_w, s, hit_prob=0.0):
        lam = self.weight(hit_prob)
        return np.clip(lam * s_w + (1.0 - lam) * s, s_w, s)


@dataclass(frozen=True)
class ThresholdState:
    hit: bool = False


@dataclass(frozen=True)
class AugmentedNode:
    node: NodeIndex
    state: ThresholdState
    price: float
    x: float  # firm value at the node


@dataclass(frozen=True)
class TradeLimits:
    """Bounds on the number of shares bought (positive) or sold per step."""

    a: float = -np.inf
    b: float = np.inf

    def __post_init__(self) -> None:
        if not self.a <= 0.0 <= self.b:
            raise ValidationError(f"trade limits need a <= 0 <= b, got [{self.a}, {self.b}]")

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.a) and np.isfinite(self.b))


@dataclass(frozen=True, eq=False)
class AugmentedLattice:
    surface: WarrantSurface
    policy: SelectorPolicy
    threshold: float
    s_wl: np.ndarray  # traded price, [t, j, hit]
    child_hit: np.ndarray  # hit state of both children, [t, j, hit], t < n
    reachable: np.ndarray  # [t, j, hit]
    hit_prob: np.ndarray  # expected-selector weight at not-hit states, [t, j]

    @property
    def lattice(self):
        return self.surface.lattice

    @property
    def n_steps(self) -> int:
        return self.surface.lattice.n_steps

    def node(self, node: NodeIndex, hit: bool) -> AugmentedNode:
        self.lattice._check(node)
        return AugmentedNode(
            node, ThresholdState(hit), float(self.s_wl[node.t, node.j, int(hit)]),
            float(self.lattice.values[node.t, node.j]),
        )

    def root(self) -> AugmentedNode:
        return self.node(NodeIndex(0, 0), bool(self.reachable[0, 0, 1]))

    def to_csv(self, path: str | Path) -> None:
        x = self.lattice.values
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "tau", "x", "w", "s_w", "hit", "s_wl"])
            for node in self.lattice.nodes():
                t, j = node.t, node.j
                for h in (0, 1):
                    if not self.reachable[t, j, h]:
                        continue
                    writer.writerow(
                        [
                            t, node.tau, fmt(x[t, j]), fmt(self.surface.w[t, j]),
                            fmt(self.surface.s_w[t, j]), h, fmt(self.s_wl[t, j, h]),
                        ]
                    )


def _hit_probabilities(surface: WarrantSurface, policy: SelectorPolicy, threshold: float) -> np.ndarray:
    """Probability, from a not-hit node, that a later monitoring step meets the threshold.

    Monitoring runs at steps 0..n-1, so the weight is zero on slice n-1 and is built
    backward using the selector's own prices on later slices.
    """
    lat = surface.lattice
    n = lat.n_steps
    q = lat.spec.q
    lam = np.zeros((n + 1, n + 1))
    if policy.kind != "expected":
        return lam
    # g: probability of meeting the threshold at or after the slice, seen from that slice
    g_next = None
    for t in range(n - 1, -1, -1):
        if g_next is not None:
            lam[t, : t + 1] = q * g_next[1:] + (1.0 - q) * g_next[:-1]
        price = policy.price(surface.s_w[t, : t + 1], surface.s[t, : t + 1], lam[t, : t + 1])
        g_next = np.where(price >= threshold, 1.0, lam[t, : t + 1])
    return lam


def build_augmented(surface: WarrantSurface, policy: SelectorPolicy | None = None) -> AugmentedLattice:
    """Price every (node, hit) state and propagate reachability forward from the root."""
    if policy is None:
        policy = SelectorPolicy()
    lat = surface.lattice
    n = lat.n_steps
    L = lat.params.threshold
    lam = _hit_probabilities(surface, policy, L)

    s_wl = np.full((n + 1, n + 1, 2), np.nan)
    for t in range(n + 1):
        s_w, s = surface.s_w[t, : t + 1], surface.s[t, : t + 1]
        s_wl[t, : t + 1, 1] = s_w
        s_wl[t, : t + 1, 0] = s if t == n else policy.price(s_w, s, lam[t, : t + 1])

    child_hit = np.zeros((n, n + 1, 2), dtype=bool)
    reachable = np.zeros((n + 1, n + 1, 2), dtype=bool)
    # every admissible root price meets a threshold at or below s_w(0), so the right is in force
    reachable[0, 0, int(L <= surface.s_w[0, 0])] = True
    for t in range(n):
        child_hit[t, : t + 1, 1] = True
        child_hit[t, : t + 1, 0] = s_wl[t, : t + 1, 0] >= L
        for j in range(t + 1):
            for h in (0, 1):
                if reachable[t, j, h]:
                    h2 = int(child_hit[t, j, h])
                    reachable[t + 1, j, h2] = True
                    reachable[t + 1, j + 1, h2] = True
    return AugmentedLattice(
        surface=surface, policy=policy, threshold=L, s_wl=s_wl,
        child_hit=child_hit, reachable=reachable, hit_prob=lam,
    )


def evolve(
    augmented: AugmentedNode,
    direction: Literal["up", "down"],
    policy: SelectorPolicy,
    surfaces: AugmentedLattice,
) -> AugmentedNode:
    """One step of the threshold-aware price process.

    The right is granted to the child when the parent already held it or the parent's
    own traded price reached the threshold.
    """
    node = augmented.node
    n = surfaces.n_steps
    if node.t >= n:
        raise ValidationError(f"terminal node {node} cannot evolve")
    if direction not in ("up", "down"):
        raise ValidationError(f"direction must be 'up' or 'down', got {direction!r}")
    child = node.up() if direction == "up" else node.down()
    hit = augmented.state.hit or augmented.price >= surfaces.threshold
    t, j = child.t, child.j
    s_w, s = surfaces.surface.s_w[t, j], surfaces.surface.s[t, j]
    if hit:
        price = s_w
    elif t == n:
        price = s
    else:
        price = policy.price(s_w, s, surfaces.hit_prob[t, j])
    return AugmentedNode(
        child, ThresholdState(bool(hit)), float(price), float(surfaces.lattice.values[t, j])
    )


def terminal_claim(augmented: AugmentedNode, params: MarketParams) -> float:
    """Per-warrant payoff at maturity, paid only if the right was granted."""
    if not augmented.state.hit:
        return 0.0
    return warrant_payoff(augmented.x, params)


def terminal_claims(aug: AugmentedLattice) -> np.ndarray:
    """Gated per-warrant payoffs over the terminal slice, shape (n+1, 2)."""
    lat = aug.lattice
    n = lat.n_steps
    out = np.zeros((n + 1, 2))
    for j in range(n + 1):
        out[j, 1] = warrant_payoff(lat.values[n, j], lat.params)
    return out
