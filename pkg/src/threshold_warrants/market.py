"""Contract and firm description plus the closed-form per-share price fractions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping


class ValidationError(ValueError):
    """Invalid parameters or configuration."""


class NumericalError(RuntimeError):
    """A numerical procedure could not produce a trustworthy answer."""


# flat config keys -> MarketParams field names
CONFIG_KEYS = {
    "x0": "x0",
    "n_shares": "n_shares",
    "m_warrants": "m_warrants",
    "strike": "strike",
    "threshold": "threshold",
    "maturity": "maturity",
    "sigma": "sigma",
    "rate": "rate",
}


@dataclass(frozen=True)
class MarketParams:
    x0: float  # initial firm value
    n_shares: int  # shares outstanding before exercise
    m_warrants: int  # warrants outstanding
    strike: float
    threshold: float
    maturity: float  # years
    sigma: float  # firm-value volatility, per sqrt(year)
    rate: float = 0.0  # continuously compounded, per year
    # test-only escape hatch for thresholds already met at t=0
    allow_met_threshold: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.x0 > 0:
            raise ValidationError(f"x0 must be positive, got {self.x0}")
        if int(self.n_shares) != self.n_shares or self.n_shares < 1:
            raise ValidationError(f"n_shares must be a positive integer, got {self.n_shares}")
        if int(self.m_warrants) != self.m_warrants or self.m_warrants < 0:
            raise ValidationError(f"m_warrants must be a non-negative integer, got {self.m_warrants}")
        if self.strike < 0:
            raise ValidationError(f"strike must be non-negative, got {self.strike}")
        if not self.maturity > 0:
            raise ValidationError(f"maturity must be positive, got {self.maturity}")
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.rate < 0:
            raise ValidationError(f"rate must be non-negative, got {self.rate}")
        if not self.allow_met_threshold:
            if not self.threshold > self.x0 / self.n_shares:
                raise ValidationError(
                    f"threshold {self.threshold} must exceed the initial undiluted price "
                    f"{self.x0 / self.n_shares}"
                )
            if not self.threshold > self.strike:
                raise ValidationError(
                    f"threshold {self.threshold} must exceed strike {self.strike}"
                )

    @property
    def dilution_fraction(self) -> float:
        """N / (N + M), the share of a call on X/N one warrant is worth."""
        return self.n_shares / (self.n_shares + self.m_warrants)

    def to_config(self) -> dict[str, float]:
        values = asdict(self)
        return {key: values[name] for key, name in CONFIG_KEYS.items()}

    @classmethod
    def from_config(cls, section: Mapping[str, Any], **overrides: Any) -> MarketParams:
        missing = [key for key in CONFIG_KEYS if key not in section]
        if missing:
            raise ValidationError(f"missing market config key(s): {', '.join(missing)}")
        unknown = sorted(set(section) - set(CONFIG_KEYS))
        if unknown:
            raise ValidationError(f"unknown market config key(s): {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, name in CONFIG_KEYS.items():
            try:
                value = float(section[key])
            except (TypeError, ValueError):
                raise ValidationError(f"market config key {key} is not a number: {section[key]!r}")
            if name in ("n_shares", "m_warrants"):
                if value != int(value):
                    raise ValidationError(f"market config key {key} must be an integer")
                value = int(value)
            kwargs[name] = value
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True)
class DiscountCurve:
    rate: float = 0.0

    def factor(self, t1: float, t2: float) -> float:
        """Discount factor from t2 back to t1; exceeds one when t2 < t1."""
        return math.exp(-self.rate * (t2 - t1))


def undiluted_price(x: float, params: MarketParams) -> float:
    """Share price if the warrants certainly lapse: X / N."""
    if not x > 0:
        raise ValidationError(f"firm value must be positive, got {x}")
    return x / params.n_shares


def diluted_price(
    x: float, t: float, params: MarketParams, curve: DiscountCurve | None = None
) -> float:
    """Share price if the warrants are certainly exercised at maturity.

    The exercise proceeds M*K arrive at maturity and are discounted back to ``t``.
    """
    if not x > 0:
        raise ValidationError(f"firm value must be positive, got {x}")
    if t < 0 or t > params.maturity * (1 + 1e-12):
        raise ValidationError(f"time {t} outside [0, {params.maturity}]")
    if curve is None:
        curve = DiscountCurve(params.rate)
    n, m = params.n_shares, params.m_warrants
    return (x + curve.factor(t, params.maturity) * m * params.strike) / (n + m)


def warrant_payoff(x_t: float, params: MarketParams) -> float:
    """Per-warrant payoff at maturity for a firm worth ``x_t`` before exercise."""
    if not x_t > 0:
        raise ValidationError(f"firm value must be positive, got {x_t}")
    n, m, k = params.n_shares, params.m_warrants, params.strike
    if x_t <= n * k:
        return 0.0
    payoff = (x_t - n * k) / (n + m)
    scale = 1e-12 * max(1.0, x_t / n)
    assert math.isclose(payoff, (x_t + m * k) / (n + m) - k, rel_tol=1e-12, abs_tol=scale)
    assert math.isclose(payoff, params.dilution_fraction * (x_t / n - k), rel_tol=1e-12, abs_tol=scale)
    return payoff
