"""Recombining CRR binomial tree for the firm value.

Nodes are addressed either as ``NodeIndex(t, tau)`` with ``tau`` the net number of
upticks, or internally as ``(t, j)`` with ``j = (t + tau) // 2`` the number of upticks.
Arrays indexed ``[t, j]`` hold NaN where ``j > t``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .market import MarketParams, ValidationError


@dataclass(frozen=True)
class NodeIndex:
    t: int
    tau: int

    def __post_init__(self) -> None:
        if self.t < 0 or abs(self.tau) > self.t or (self.t - self.tau) % 2:
            raise ValidationError(f"invalid node (t={self.t}, tau={self.tau})")

    @property
    def j(self) -> int:
        return (self.t + self.tau) // 2

    @classmethod
    def from_j(cls, t: int, j: int) -> NodeIndex:
        return cls(t, 2 * j - t)

    def up(self) -> NodeIndex:
        return NodeIndex(self.t + 1, self.tau + 1)

    def down(self) -> NodeIndex:
        return NodeIndex(self.t + 1, self.tau - 1)


@dataclass(frozen=True)
class LatticeSpec:
    n_steps: int
    dt: float
    u: float
    d: float
    q: float  # risk-neutral up-probability
    growth: float  # exp(r * dt)

    @property
    def discount(self) -> float:
        return 1.0 / self.growth


@dataclass(frozen=True, eq=False)
class Lattice:
    spec: LatticeSpec
    params: MarketParams
    values: np.ndarray  # firm value, shape (n+1, n+1), indexed [t, j]

    @property
    def n_steps(self) -> int:
        return self.spec.n_steps

    def value(self, node: NodeIndex) -> float:
        self._check(node)
        return float(self.values[node.t, node.j])

    def time(self, t: int) -> float:
        return t * self.spec.dt

    def nodes(self) -> Iterator[NodeIndex]:
        """All nodes, time-major with tau ascending."""
        for t in range(self.n_steps + 1):
            for j in range(t + 1):
                yield NodeIndex.from_j(t, j)

    @property
    def node_count(self) -> int:
        n = self.n_steps
        return (n + 1) * (n + 2) // 2

    def _check(self, node: NodeIndex) -> None:
        if node.t > self.n_steps:
            raise ValidationError(f"node {node} beyond lattice depth {self.n_steps}")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "tau", "x_value"])
            for node in self.nodes():
                writer.writerow([node.t, node.tau, fmt(self.values[node.t, node.j])])


def fmt(value: float) -> str:
    return f"{value:.12g}"


def triangular(n_steps: int) -> np.ndarray:
    return np.full((n_steps + 1, n_steps + 1), np.nan)


def build_lattice(params: MarketParams, n_steps: int, u: float | None = None) -> Lattice:
    """Build the firm-value tree; ``u`` overrides the CRR uptick ratio when given."""
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValidationError(f"n_steps must be a positive integer, got {n_steps}")
    n_steps = int(n_steps)
    dt = params.maturity / n_steps
    if u is None:
        u = math.exp(params.sigma * math.sqrt(dt))
    elif not u > 1:
        raise ValidationError(f"uptick ratio must exceed 1, got {u}")
    d = 1.0 / u
    growth = math.exp(params.rate * dt)
    if not d < growth < u:
        raise ValidationError(
            f"no risk-neutral measure: need d < exp(r*dt) < u, got "
            f"u={u!r}, d={d!r}, r*dt={params.rate * dt!r}"
        )
    q = (growth - d) / (u - d)
    values = triangular(n_steps)
    for t in range(n_steps + 1):
        j = np.arange(t + 1)
        values[t, : t + 1] = params.x0 * u ** (2 * j - t).astype(float)
    spec = LatticeSpec(n_steps=n_steps, dt=dt, u=u, d=d, q=q, growth=growth)
    return Lattice(spec=spec, params=params, values=values)


def risk_neutral_expectation(
    lattice: Lattice, node: NodeIndex, f: Callable[[NodeIndex], float]
) -> float:
    """q * f(up child) + (1 - q) * f(down child), undiscounted."""
    lattice._check(node)
    if node.t >= lattice.n_steps:
        raise ValidationError(f"terminal node {node} has no children")
    q = lattice.spec.q
    return q * f(node.up()) + (1.0 - q) * f(node.down())
