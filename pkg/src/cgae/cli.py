"""Command-line entry point: ``cgae <stage> [--config FILE] [--seed N] ...``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ConfigError, load_config

STAGES = {
    "synth": pipeline.run_synth,
    "select-lags": pipeline.run_select_lags,
    "build-graph": pipeline.run_build_graph,
    "train": pipeline.run_train,
    "forecast": pipeline.run_forecast,
    "evaluate": pipeline.run_evaluate,
}
_PER_HORIZON = {"train", "forecast", "evaluate"}
_HELP = {
    "synth": "write a seeded synthetic GHI network to data.csv",
    "select-lags": "choose input lags by lagged mutual information",
    "build-graph": "build the site graph from correlations or distances",
    "train": "train one checkpoint per horizon",
    "forecast": "draw ensembles and persistence baselines for the test split",
    "evaluate": "score CGAE and persistence ensembles and write reports",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgae", description="Probabilistic GHI forecasting with a graph auto-encoder.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name in STAGES:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--workdir", help="override paths.workdir")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name in _PER_HORIZON:
            p.add_argument("--horizon", type=int, action="append",
                           help="restrict to this horizon (repeatable); default: all configured")
        if name == "train":
            p.add_argument("--epochs", type=int, help="override training.epochs")
        if name == "synth":
            p.add_argument("--nodes", type=int, help="override synth.nodes")
            p.add_argument("--days", type=int, help="override synth.days")
            p.add_argument("--noise", type=float, help="override synth.noise")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "workdir": args.workdir}
    for key in ("epochs", "nodes", "days", "noise"):
        overrides[key] = getattr(args, key, None)
    try:
        cfg = load_config(args.config, **overrides)
    except ConfigError as err:
        print(f"cgae {args.command}: {err}", file=sys.stderr)
        return 2
    stage = STAGES[args.command]
    try:
        if args.command in _PER_HORIZON:
            summary = stage(cfg, args.horizon)
        else:
            summary = stage(cfg)
    except pipeline.MissingArtifactError as err:
        print(f"cgae {args.command}: {err}", file=sys.stderr)
        return 3
    except (ValueError, OSError, RuntimeError) as err:
        print(f"cgae {args.command}: error: {err}", file=sys.stderr)
        return 1
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
