"""YAML run configuration shared by the CLI subcommands.

A file has a ``market`` section (flat MarketParams keys) with a ``lattice`` section, or a
``plain_call`` section for a stock tree without a firm-value model. An optional
``pricing`` section configures the indifference engine.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .market import MarketParams, ValidationError
from .threshold import SelectorPolicy, TradeLimits

SECTIONS = ("market", "lattice", "pricing", "plain_call")
LATTICE_KEYS = ("n_steps", "uptick")
PLAIN_CALL_KEYS = ("s0", "up", "down", "strike", "n_steps", "rate_per_step", "barrier")


@dataclass(frozen=True)
class PricingConfig:
    selector: str = "expected"
    gamma: float = 1.0
    p_physical: float | None = None
    delta_min: float | None = None  # None means unbounded
    delta_max: float | None = None
    wealth_grid_points: int = 801
    tol_w: float = 1e-6
    interpolation: str = "log"

    def __post_init__(self) -> None:
        SelectorPolicy.parse(self.selector)

    @property
    def policy(self) -> SelectorPolicy:
        return SelectorPolicy.parse(self.selector)

    @property
    def limits(self) -> TradeLimits:
        a = -math.inf if self.delta_min is None else float(self.delta_min)
        b = math.inf if self.delta_max is None else float(self.delta_max)
        return TradeLimits(a, b)


@dataclass(frozen=True)
class PlainCallConfig:
    s0: float
    up: float  # gross up factor, e.g. 1.1
    down: float
    strike: float
    n_steps: int = 1
    rate_per_step: float = 0.0
    barrier: float | None = None


@dataclass(frozen=True)
class RunConfig:
    market: MarketParams | None = None
    n_steps: int | None = None
    uptick: float | None = None
    pricing: PricingConfig = field(default_factory=PricingConfig)
    plain_call: PlainCallConfig | None = None

    def require_market(self) -> MarketParams:
        if self.market is None:
            raise ValidationError("this command needs a market section")
        return self.market

    def require_steps(self) -> int:
        if self.n_steps is None:
            raise ValidationError("missing lattice config key: n_steps")
        return self.n_steps

    def resolved(self) -> dict[str, Any]:
        """Plain dict echo of every effective setting."""
        out: dict[str, Any] = {}
        if self.market is not None:
            out["market"] = self.market.to_config()
            out["lattice"] = {"n_steps": self.n_steps, "uptick": self.uptick}
        if self.plain_call is not None:
            out["plain_call"] = asdict(self.plain_call)
        out["pricing"] = asdict(self.pricing)
        return out


def _typed(section: str, key: str, value: Any, kind: type, optional: bool = False) -> Any:
    if value is None and optional:
        return None
    try:
        if kind is int:
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        return kind(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{section} config key {key} has a bad value: {value!r}")


def _check_keys(section: str, data: dict[str, Any], allowed, required=()) -> None:
    missing = [k for k in required if k not in data]
    if missing:
        raise ValidationError(f"missing {section} config key(s): {', '.join(missing)}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown {section} config key(s): {', '.join(unknown)}")


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"override {item!r} must look like section.key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ValidationError(f"override key {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        if section not in SECTIONS:
            raise ValidationError(f"unknown config section {section!r}")
        raw.setdefault(section, {})[key] = yaml.safe_load(value)
    return raw


def parse_config(raw: dict[str, Any]) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping of sections")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ValidationError(f"unknown config section(s): {', '.join(unknown)}")
    for name, body in raw.items():
        if not isinstance(body, dict):
            raise ValidationError(f"config section {name} must be a mapping")

    pricing_raw = dict(raw.get("pricing") or {})
    _check_keys("pricing", pricing_raw, PricingConfig.__dataclass_fields__)
    types = {"selector": str, "gamma": float, "p_physical": float, "delta_min": float,
             "delta_max": float, "wealth_grid_points": int, "tol_w": float, "interpolation": str}
    pricing = PricingConfig(**{
        k: _typed("pricing", k, v, types[k], optional=k in ("p_physical", "delta_min", "delta_max"))
        for k, v in pricing_raw.items()
    })

    plain = None
    if "plain_call" in raw:
        body = raw["plain_call"]
        _check_keys("plain_call", body, PLAIN_CALL_KEYS, ("s0", "up", "down", "strike"))
        plain = PlainCallConfig(**{
            k: _typed("plain_call", k, v, int if k == "n_steps" else float, optional=k == "barrier")
            for k, v in body.items()
        })

    market = n_steps = uptick = None
    if "market" in raw:
        market = MarketParams.from_config(raw["market"])
        lat = raw.get("lattice") or {}
        _check_keys("lattice", lat, LATTICE_KEYS, ("n_steps",))
        n_steps = _typed("lattice", "n_steps", lat["n_steps"], int)
        uptick = _typed("lattice", "uptick", lat.get("uptick"), float, optional=True)
    elif "lattice" in raw:
        raise ValidationError("lattice section given without a market section")
    if market is None and plain is None:
        raise ValidationError("config needs a market or a plain_call section")
    return RunConfig(market=market, n_steps=n_steps, uptick=uptick, pricing=pricing, plain_call=plain)


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}")
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}")
    return parse_config(apply_overrides(raw, overrides or []))
