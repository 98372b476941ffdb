"""Command-line entry point: ``pgrad <experiment> [--config FILE] [flags]``."""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import load_config, run_experiment
from .io import _jsonable

SUBCOMMANDS = {
    "trajectory": "trajectory",
    "orbit": "measure_orbit",
    "density": "density",
    "rate-curves": "rate_curves",
    "rate-range": "rate_range",
    "stability": "stability_probe",
    "hilbert": "hilbert",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgrad", description="P-gradient experiments; writes CSV and a JSON sidecar.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat TOML file with experiment parameters")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes for independent trials")
        p.add_argument("--pspec", help="sd, mr or power:q")
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--gradient-stop", dest="gradient_stop", type=float)
        p.add_argument("--relaxation", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    overrides["experiment"] = SUBCOMMANDS[args.command]
    try:
        config = load_config(args.config, **overrides)
        summary = run_experiment(config)
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"pgrad {args.command}: error: {exc}", file=sys.stderr)
        return 2
    json.dump(_jsonable(summary), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0
