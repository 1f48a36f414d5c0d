"""Time the value-surface sweep on the numba and pure-numpy backends.

    python benchmarks/bench_kernels.py --steps 20 40 --grid 201 801
"""

import argparse
import time

import numpy as np

from threshold_warrants import (
    MarketParams, SelectorPolicy, TradeLimits, TradingTree, UtilityFunction,
    build_augmented, build_lattice, price_classical_warrant, value_surface,
)
from threshold_warrants import _kernels


def make_tree(n_steps: int) -> TradingTree:
    params = MarketParams(1000, 10, 4, 95, 120, 1.0, 0.3)
    surface = price_classical_warrant(build_lattice(params, n_steps))
    return TradingTree.from_augmented(build_augmented(surface, SelectorPolicy("expected")))


def timed(tree, grid, use_numba, repeats):
    kw = dict(limits=TradeLimits(-2.0, 2.0), grid_points=grid, use_numba=use_numba)
    value_surface(tree, UtilityFunction(1.0), 0.55, **kw)  # warm-up, includes JIT
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        vs = value_surface(tree, UtilityFunction(1.0), 0.55, **kw)
        best = min(best, time.perf_counter() - t0)
    return best, vs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, nargs="+", default=[10, 20, 40])
    ap.add_argument("--grid", type=int, nargs="+", default=[201, 801])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")

    print(f"{'steps':>5} {'grid':>5} {'numpy s':>10} {'numba s':>10} {'speedup':>8} {'max |dpsi|':>11}")
    for n in args.steps:
        tree = make_tree(n)
        for g in args.grid:
            t_np, vs_np = timed(tree, g, False, args.repeats)
            t_nb, vs_nb = timed(tree, g, True, args.repeats)
            diff = max(np.nanmax(np.abs(a - b)) for a, b in zip(vs_np.psi, vs_nb.psi))
            print(f"{n:>5} {g:>5} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.1f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
