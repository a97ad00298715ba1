"""Command-line entry point: ``latentseg <subcommand> --config PATH [--seed N]``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config

log = logging.getLogger("latentseg")

SUBCOMMANDS = {
    "generate": "generate a synthetic population (customers + transactions CSV)",
    "train-stage1": "train the behaviour classifier",
    "train-stage2": "train the SPLC intent classifier and write the correction report",
    "score": "batch-score customers into the score store",
    "export-targets": "export the target id list from the score store",
    "evaluate": "RFM baseline vs model comparison table",
    "gain-curve": "cumulative gain curve of stage-2 scores",
    "abtest": "simulate the stratified A/B campaign",
    "validate": "check the config and any dataset files it points to",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "export-targets":
            g = p.add_mutually_exclusive_group()
            g.add_argument("--k", type=int, default=None, help="number of top customers")
            g.add_argument("--cut", type=float, default=None, help="keep scores above this value")
    return parser


def _dispatch(args, cfg):
    cmd = args.command
    if cmd == "generate":
        pipeline.run_generate(cfg)
    elif cmd == "train-stage1":
        pipeline.run_train_stage1(cfg)
    elif cmd == "train-stage2":
        pipeline.run_train_stage2(cfg)
    elif cmd == "score":
        pipeline.run_batch_scoring(cfg)
    elif cmd == "export-targets":
        pipeline.run_export(cfg, k=args.k, cut=args.cut)
    elif cmd == "evaluate":
        rows = pipeline.run_evaluate(cfg)
        print(pipeline.evaluate.format_comparison(rows))
    elif cmd == "gain-curve":
        pipeline.run_gain_curve(cfg)
    elif cmd == "abtest":
        print(pipeline.run_abtest(cfg).format_table())
    elif cmd == "validate":
        problems = pipeline.run_validate(cfg)
        for p in problems:
            print(p)
        if problems:
            raise ValueError(f"{len(problems)} dataset invariant violation(s)")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        log.info("resolved config:\n%s", cfg.render())
        _dispatch(args, cfg)
    except (OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"latentseg {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
