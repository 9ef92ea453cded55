"""Operator entry points.

    s2s serve    --config FILE
    s2s simulate --script FILE --config FILE [--trace OUT]
    s2s bench    --trials N
    s2s sft build --corpus DIR --out FILE [--tau MS] [--neg-ratio R] [--seed S]
    s2s sft eval  --pred FILE --gold FILE

Exit codes are a stable contract: 0 all pass, 1 assertion failure,
2 configuration error, 3 environment error.  S2S_LOG sets log verbosity.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

from .config import AppConfig, ConfigError, load_config
from .sftdata import (
    BuildConfig,
    BuildError,
    EvalError,
    build_dataset,
    evaluate,
    export_records,
    load_corpus,
    load_labels,
    render_report_row,
)
from .simulate import ScriptError, bench, load_script, render_bench, run_script

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_ENVIRONMENT = 3


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s2s", description="Full-duplex speech conversation service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the websocket server")
    p.add_argument("--config", required=True, help="TOML config file")

    p = sub.add_parser("simulate", help="replay a scripted conversation in-process")
    p.add_argument("--script", required=True, help="NDJSON scenario script")
    p.add_argument("--config", required=True, help="TOML config file")
    p.add_argument("--trace", default=None, help="write the session trace here")

    p = sub.add_parser("bench", help="measure barge-in preemption latency")
    p.add_argument("--trials", type=_positive_int, required=True)

    sft = sub.add_parser("sft", help="judge training data tools")
    sft_sub = sft.add_subparsers(dest="sft_command", required=True)

    p = sft_sub.add_parser("build", help="build a labeled dataset from a transcript corpus")
    p.add_argument("--corpus", required=True, help="directory of dialogue .ndjson files")
    p.add_argument("--out", required=True, help="output NDJSON dataset")
    p.add_argument("--tau", type=_positive_int, default=700, help="pause threshold in ms")
    p.add_argument("--neg-ratio", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default=None, help="manifest path (default: OUT.manifest.json)")

    p = sft_sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)

    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("S2S_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def cmd_serve(args) -> int:
    from .server import serve_forever

    cfg = load_config(args.config)
    try:
        asyncio.run(serve_forever(cfg))
    except OSError as e:
        print(f"cannot serve: {e}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    events = load_script(args.script)
    report = run_script(events, cfg, trace_out=args.trace)
    print(report.render())
    return EXIT_OK if report.passed else EXIT_ASSERTION


def cmd_bench(args) -> int:
    result = bench(args.trials)
    print(render_bench(result))
    return EXIT_OK


def cmd_sft_build(args) -> int:
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        print(f"not a directory: {corpus_dir}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    if args.neg_ratio < 0:
        print("--neg-ratio must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    dialogues = load_corpus(corpus_dir)
    examples, manifest = build_dataset(
        dialogues, BuildConfig(tau_ms=args.tau, neg_ratio=args.neg_ratio, seed=args.seed))
    export_records(examples, args.out)
    manifest_path = args.manifest or f"{args.out}.manifest.json"
    Path(manifest_path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {manifest['total']} examples "
          f"({manifest['positives']} boundary, {manifest['negatives']} truncation) "
          f"to {args.out}")
    return EXIT_OK


def cmd_sft_eval(args) -> int:
    pred = load_labels(args.pred)
    gold = load_labels(args.gold)
    metrics = evaluate(pred, gold)
    print(render_report_row(metrics))
    print(f"tp={metrics.tp} fp={metrics.fp} fn={metrics.fn} tn={metrics.tn}")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "sft" and args.sft_command == "build":
            return cmd_sft_build(args)
        if args.command == "sft" and args.sft_command == "eval":
            return cmd_sft_eval(args)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, ScriptError, BuildError, EvalError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except KeyboardInterrupt:
        return EXIT_OK
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
