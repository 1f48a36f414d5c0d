"""Command-line front end: build-tree, certify, min-steps, price."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import Any

import yaml

from .arbitrage import certify_no_martingale, minimal_steps
from .classical import price_classical_warrant
from .config import RunConfig, load_config
from .indifference import UtilityFunction, indifference_price, plain_stock_tree, price_threshold_warrant
from .lattice import build_lattice, fmt
from .market import NumericalError, ValidationError
from .threshold import build_augmented

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("threshold_warrants")


def _echo(cfg: RunConfig, result: dict[str, Any] | None = None, as_json: bool = False) -> None:
    doc: dict[str, Any] = {"config": cfg.resolved()}
    if result is not None:
        doc["result"] = result
    if as_json:
        print(json.dumps(doc, indent=2))
    else:
        print(yaml.safe_dump(doc, sort_keys=False), end="")


def cmd_build_tree(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    params = cfg.require_market()
    lattice = build_lattice(params, cfg.require_steps(), u=cfg.uptick)
    surface = price_classical_warrant(lattice)
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "tau", "x", "s", "w", "s_w"])
        for node in lattice.nodes():
            t, j = node.t, node.j
            writer.writerow([
                t, node.tau, fmt(lattice.values[t, j]), fmt(surface.s[t, j]),
                fmt(surface.w[t, j]), fmt(surface.s_w[t, j]),
            ])
    result = {"tree_csv": str(args.output), "nodes": lattice.node_count}
    if args.augmented:
        build_augmented(surface, cfg.pricing.policy).to_csv(args.augmented)
        result["augmented_csv"] = str(args.augmented)
    _echo(cfg, result)
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    n = args.n_steps if args.n_steps is not None else cfg.require_steps()
    cert = certify_no_martingale(cfg.require_market(), n, u=cfg.uptick,
                                 allow_below_min_steps=args.allow_below_min_steps)
    if args.json:
        _echo(cfg, cert.to_dict(), as_json=True)
    else:
        _echo(cfg)
        print(cert.transcript())
    return EXIT_OK


def cmd_min_steps(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    n_min = minimal_steps(cfg.require_market())
    _echo(cfg, {"minimal_steps": n_min})
    return EXIT_OK


def cmd_price(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    pc = cfg.pricing
    utility = UtilityFunction(pc.gamma)
    kw = dict(limits=pc.limits, grid_points=pc.wealth_grid_points, tol_w=pc.tol_w,
              interpolation=pc.interpolation)
    if cfg.plain_call is not None:
        call = cfg.plain_call
        tree = plain_stock_tree(call.s0, call.up, call.down, call.n_steps,
                                lambda s: max(s - call.strike, 0.0), call.rate_per_step, call.barrier)
        p = pc.p_physical
        if p is None:
            p = (1.0 + call.rate_per_step - call.down) / (call.up - call.down)
            log.warning("p_physical not set; using the risk-neutral probability %.6g", p)
        result = {"plain_call": indifference_price(tree, utility, p, **kw).to_dict()}
    else:
        pricing = price_threshold_warrant(
            cfg.require_market(), cfg.require_steps(), policy=pc.policy, utility=utility,
            p=pc.p_physical, u=cfg.uptick, **kw,
        )
        result = pricing.to_dict()
        cert = result.pop("certificate")
        if cert is not None:
            result["certificate"] = {"holds": cert["holds"], "route": cert["route"]}
    _echo(cfg, result, as_json=args.json)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threshold-warrants",
        description="Lattice pricing lab for dilutive warrants with a share-price threshold.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        p.set_defaults(func=func)
        return p

    p = add("build-tree", cmd_build_tree, "export firm value, share prices and warrant values as CSV")
    p.add_argument("-o", "--output", required=True, help="CSV path for the tree")
    p.add_argument("--augmented", help="also export the hit-augmented traded prices here")

    p = add("certify", cmd_certify, "search for a witness that the traded price is not a martingale")
    p.add_argument("--n-steps", type=int, help="override lattice.n_steps")
    p.add_argument("--allow-below-min-steps", action="store_true")
    p.add_argument("--json", action="store_true", help="emit the certificate as JSON")

    add("min-steps", cmd_min_steps, "smallest CRR step count for the down-step inequality")

    p = add("price", cmd_price, "indifference price of the threshold warrant or a plain call")
    p.add_argument("--json", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
