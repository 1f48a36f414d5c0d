"""Lattice pricing lab for dilutive warrants whose exercise right depends on a share-price threshold."""

from .arbitrage import (
    ArbitrageCertificate,
    PriceBounds,
    certify_no_martingale,
    check_down_step_dominance,
    compute_bounds,
    critical_upticks,
    minimal_steps,
    propagate_upticks,
)
from .classical import WarrantSurface, certain_exercise, price_classical_warrant, stock_price_under_warrants
from .indifference import (
    IndifferenceResult,
    TradingTree,
    UtilityFunction,
    ValueSurface,
    WealthGrid,
    indifference_price,
    optimize_delta,
    plain_stock_tree,
    price_threshold_warrant,
    value_surface,
    wealth_step,
)
from .lattice import Lattice, LatticeSpec, NodeIndex, build_lattice, risk_neutral_expectation
from .market import (
    DiscountCurve,
    MarketParams,
    NumericalError,
    ValidationError,
    diluted_price,
    undiluted_price,
    warrant_payoff,
)
from .threshold import (
    AugmentedLattice,
    AugmentedNode,
    SelectorPolicy,
    ThresholdState,
    TradeLimits,
    build_augmented,
    evolve,
    terminal_claim,
)

__version__ = "0.1.0"
