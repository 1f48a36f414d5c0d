"""Classical (threshold-free) warrants on the firm-value tree."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lattice import Lattice, NodeIndex, fmt, triangular


@dataclass(frozen=True, eq=False)
class WarrantSurface:
    lattice: Lattice
    w: np.ndarray  # warrant value per warrant, [t, j]
    s_w: np.ndarray  # share price with M classical warrants outstanding
    s: np.ndarray  # undiluted share price X / N

    def warrant(self, node: NodeIndex) -> float:
        return float(self.w[node.t, node.j])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "tau", "x", "w", "s_w"])
            x = self.lattice.values
            for node in self.lattice.nodes():
                t, j = node.t, node.j
                writer.writerow(
                    [t, node.tau, fmt(x[t, j]), fmt(self.w[t, j]), fmt(self.s_w[t, j])]
                )


def terminal_payoffs(lattice: Lattice) -> np.ndarray:
    """Per-warrant exercise value (X_T - N K)^+ / (N + M) over the terminal slice."""
    p = lattice.params
    n = lattice.n_steps
    x_t = lattice.values[n, : n + 1]
    return np.where(
        x_t > p.n_shares * p.strike,
        (x_t - p.n_shares * p.strike) / (p.n_shares + p.m_warrants),
        0.0,
    )


def price_classical_warrant(lattice: Lattice) -> WarrantSurface:
    """Backward induction of the diluted payoff under the risk-neutral measure."""
    p = lattice.params
    n = lattice.n_steps
    q, disc = lattice.spec.q, lattice.spec.discount
    w = triangular(n)
    w[n, : n + 1] = terminal_payoffs(lattice)
    for t in range(n - 1, -1, -1):
        w[t, : t + 1] = disc * (q * w[t + 1, 1 : t + 2] + (1.0 - q) * w[t + 1, : t + 1])
    s = lattice.values / p.n_shares
    s_w = (lattice.values - p.m_warrants * w) / p.n_shares
    return WarrantSurface(lattice=lattice, w=w, s_w=s_w, s=s)


def stock_price_under_warrants(surface: WarrantSurface, node: NodeIndex) -> float:
    """(X - M W) / N at ``node``."""
    surface.lattice._check(node)
    return float(surface.s_w[node.t, node.j])


def certain_exercise(lattice: Lattice, node: NodeIndex) -> bool:
    """True when every maturity descendant of ``node`` ends in the money (X_T > N K)."""
    p = lattice.params
    lattice._check(node)
    # the all-down descendant keeps the same uptick count j
    return bool(lattice.values[lattice.n_steps, node.j] > p.n_shares * p.strike)
