"""Command line entry point.

Every subcommand exits 0 on success.  On failure it prints one JSON object
``{"error": <type>, "message": <text>, "command": <subcommand>}`` to stderr and
exits 2 for bad input (config, arguments) or 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..fiber import PropagationDiverged
from ..metrics import InsufficientData
from ..signal import SignalError
from ..transceiver import TrainingDiverged
from . import runners
from .config import ConfigError, ExperimentConfig

_INPUT_ERRORS = (ConfigError, SignalError, InsufficientData, FileNotFoundError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file layered over the preset")
    common.add_argument("--preset", choices=("desk", "paper"), default=None)
    common.add_argument("--seed", type=int, default=None, help="single seed (overrides run.seeds)")
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="zspatial", description="z-spatial diversity experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("soliton-demo", parents=[common], help="spectral breathing of a two-soliton")
    sl = sub.add_parser("sweep-l2", parents=[common], help="rate against second fiber length")
    sl.add_argument("--scenario", choices=("soliton", "ae"), default="ae")
    sub.add_parser("sweep-power", parents=[common], help="rate against launch power for all receivers")
    sub.add_parser("baselines", parents=[common], help="CDC and split-DBP curves")
    sub.add_parser("train", parents=[common], help="train one transceiver and save a checkpoint")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on held-out frames")
    ev.add_argument("--checkpoint", type=Path, default=None)
    return p


def load_config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["run.seeds"] = str(args.seed)
    if args.workers is not None:
        overrides["run.workers"] = str(args.workers)
    if args.config is not None:
        return ExperimentConfig.load(args.config, args.preset, overrides)
    return ExperimentConfig.build(args.preset or "desk", overrides)


def _dispatch(args, cfg: ExperimentConfig) -> dict:
    out = args.out
    workers = cfg.int("run.workers")
    seed = cfg.ints("run.seeds")[0]
    cmd = args.command
    if cmd == "soliton-demo":
        return runners.run_soliton_demo(cfg, out)
    if cmd == "sweep-l2":
        if args.scenario == "soliton":
            rows = runners.run_soliton_l2_sweep(cfg, out, workers)
        else:
            rows = runners.run_ae_l2_sweep(cfg, out, workers)
        return {"rows": len(rows)}
    if cmd == "sweep-power":
        return {"rows": len(runners.run_ae_power_sweep(cfg, out, workers))}
    if cmd == "baselines":
        return {"rows": len(runners.run_baseline_curves(cfg, out, workers))}
    if cmd == "train":
        return runners.run_train(cfg, out, seed)
    if cmd == "eval":
        return runners.run_eval(cfg, out, seed, args.checkpoint)
    raise ConfigError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    command = next((a for a in argv if not a.startswith("-")), None)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
        summary = _dispatch(args, cfg)
    except _INPUT_ERRORS as e:
        _fail(command, e)
        return 2
    except (PropagationDiverged, TrainingDiverged, runners.PairingError, RuntimeError, OSError) as e:
        _fail(command, e)
        return 1
    print(json.dumps({"status": "ok", "command": args.command, "out": str(args.out),
                      **{k: v for k, v in summary.items() if k != "wall_s"}}, sort_keys=True, default=str))
    return 0


def _fail(command, exc):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": command}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
