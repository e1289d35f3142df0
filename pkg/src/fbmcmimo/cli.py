"""Command-line entry point: ``fbmcmimo simulate | validate-config | list-experiments``."""

import argparse
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, load_config
from .runner import run_experiment

log = logging.getLogger("fbmcmimo")

DEFAULT_EXPERIMENTS = Path("experiments")


def _simulate(args):
    cfg = load_config(args.config, seed=args.seed, trials=args.trials)
    start = time.perf_counter()
    run_experiment(cfg, threads=args.threads, out=args.out)
    log.info("%s: %d sweep points x %d trials in %.1f s -> %s", cfg.name,
             len(cfg.sweep_values), cfg.trials, time.perf_counter() - start, args.out)
    return 0


def _validate(args):
    status = 0
    for path in args.config:
        try:
            cfg = load_config(path)
        except ConfigError as exc:
            status = 1
            for name, message in exc.errors:
                print(f"{path}: {name}: {message}", file=sys.stderr)
        except (OSError, ValueError) as exc:
            status = 1
            print(f"{path}: {exc}", file=sys.stderr)
        else:
            print(f"{path}: ok ({cfg.name}, {cfg.scenario}, sweep {cfg.sweep_param}="
                  f"{list(cfg.sweep_values)})")
    return status


def _list(args):
    root = Path(args.dir)
    files = sorted(root.glob("*.yaml"))
    if not files:
        print(f"no experiment configs under {root}", file=sys.stderr)
        return 1
    for path in files:
        try:
            cfg = load_config(path)
            print(f"{path.name:28s} {cfg.scenario:9s} sweep {cfg.sweep_param}={list(cfg.sweep_values)}")
        except (ConfigError, OSError) as exc:
            print(f"{path.name:28s} INVALID: {exc}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fbmcmimo", description="FBMC massive-MIMO link simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment config and write a CSV")
    sim.add_argument("--config", required=True, help="YAML experiment file")
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--trials", type=int, help="override the number of trials")
    sim.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    sim.set_defaults(func=_simulate)

    val = sub.add_parser("validate-config", help="check experiment configs")
    val.add_argument("config", nargs="+")
    val.set_defaults(func=_validate)

    lst = sub.add_parser("list-experiments", help="list configs in a directory")
    lst.add_argument("--dir", default=str(DEFAULT_EXPERIMENTS))
    lst.set_defaults(func=_list)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for name, message in exc.errors:
            print(f"config error: {name}: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
