"""Command-line front end.

Subcommands:
  run <experiment>   run one experiment recipe, write CSVs + manifest
  config check       parse a config file and echo the effective values
  model inspect      describe a saved allocator model

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import os
import sys

from .configfile import apply_overrides, config_echo, parse_config_file
from .dnn import load_model
from .errors import ConfigError, NumericalError
from .experiments import EXPERIMENTS, run_experiment
from .scenario import PowerLimits, SystemConfig


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cellfree-se",
        description="Spectral-efficiency experiments for joint unicast/"
                    "multicast cell-free massive MIMO")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment recipe")
    run_p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    _common_flags(run_p)

    cfg_p = sub.add_parser("config", help="configuration utilities")
    cfg_sub = cfg_p.add_subparsers(dest="config_command", required=True)
    check_p = cfg_sub.add_parser("check", help="validate a config file")
    _common_flags(check_p)

    model_p = sub.add_parser("model", help="model utilities")
    model_sub = model_p.add_subparsers(dest="model_command", required=True)
    inspect_p = model_sub.add_parser("inspect", help="describe a model file")
    inspect_p.add_argument("path")
    return parser


def _common_flags(p):
    p.add_argument("--config", metavar="PATH", help="config file (key = value)")
    p.add_argument("--seed", type=int, default=None,
                   help="experiment seed (default: config rng_seed)")
    p.add_argument("--out", metavar="DIR", default="out",
                   help="output directory (default: ./out)")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   dest="overrides", help="override a config value (repeatable)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for Monte Carlo chunks "
                        "(default: CELLFREE_SE_THREADS or 1)")
    p.add_argument("--plots", action="store_true",
                   help="also write SVG charts next to the CSVs")


def _load(args):
    if args.config:
        cfg, limits, sections = parse_config_file(args.config)
    else:
        cfg, limits, sections = SystemConfig(), PowerLimits(), {}
    return apply_overrides(cfg, limits, sections, args.overrides)


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CELLFREE_SE_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg, limits, sections = _load(args)
            seed = args.seed if args.seed is not None else cfg.rng_seed
            manifest = run_experiment(args.experiment, cfg, limits, sections,
                                      seed=seed, out_dir=args.out,
                                      threads=_threads(args), plots=args.plots)
            print(f"wrote {manifest}")
            return 0
        if args.command == "config":
            cfg, limits, sections = _load(args)
            echo = config_echo(cfg, limits)
            if sections:
                echo["sections"] = sections
            print(json.dumps(echo, indent=2, sort_keys=True))
            return 0
        if args.command == "model":
            params = load_model(args.path)
            info = {
                "widths": params.widths,
                "n_parameters": int(sum(w.size for w in params.weights)
                                    + sum(b.size for b in params.biases)),
                "input_mean_range": [float(params.input_mean.min()),
                                     float(params.input_mean.max())],
            }
            print(json.dumps(info, indent=2))
            return 0
        parser.error(f"unhandled command {args.command}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (NumericalError, ValueError) as err:
        context = type(err).__name__
        print(f"numerical/parameter failure ({context}): {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
