"""Command line entry point: ``clirpipe run`` and ``clirpipe eval``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import evaluation
from .config import STAGES, ConfigError, load_config
from .pipeline import Pipeline, StageError

log = logging.getLogger("clirpipe")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clirpipe", description="Cross-language retrieval experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment pipeline from a config file")
    run.add_argument("-c", "--config", required=True)
    run.add_argument("-o", "--override", action="append", default=[], metavar="KEY=VALUE",
                     help="dotted-path config setting, repeatable")
    run.add_argument("--stop-after", choices=STAGES)
    run.add_argument("--resume", action="store_true", help="skip stages whose manifests match")
    run.add_argument("--workers", type=_positive_int, default=1)
    run.add_argument("--output-dir")

    ev = sub.add_parser("eval", help="score a run file against qrels")
    ev.add_argument("run_path")
    ev.add_argument("qrels_path")
    ev.add_argument("-m", "--measures", nargs="+", default=list(evaluation.DEFAULT_MEASURES))
    return parser


def cmd_run(args) -> int:
    overrides = list(args.override)
    if args.output_dir:
        overrides.append(f"output_dir={args.output_dir}")
    try:
        config = load_config(args.config, overrides)
        pipeline = Pipeline(config, workers=args.workers)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = pipeline.run(resume=args.resume, stop_after=args.stop_after, echo=sys.stdout)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    if result.final_run is not None:
        log.info("final run: %s", result.final_run)
    return EXIT_OK


def cmd_eval(args) -> int:
    for path in (args.run_path, args.qrels_path):
        try:
            open(path, "rb").close()
        except OSError as e:
            print(f"error: cannot read {path}: {e.strerror}", file=sys.stderr)
            return EXIT_USAGE
    try:
        for m in args.measures:
            evaluation.parse_measure(m)
    except evaluation.EvalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        evaluation.evaluate(args.run_path, args.qrels_path, args.measures, out=sys.stdout)
    except evaluation.EvalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "run":
        return cmd_run(args)
    return cmd_eval(args)


if __name__ == "__main__":
    sys.exit(main())
