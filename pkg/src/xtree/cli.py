"""Command-line interface: composable subcommands over one config file.

Exit codes: 0 success, 1 usage/config error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, synth
from .config import ConfigError, load_config
from .model_registry import ModelSpecError
from .numstats import NonConvergenceError
from .pipeline import Pipeline, format_report_table
from .shallow_models import MlpDivergenceError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="xtree", description=__doc__)
    parser.add_argument("--version", action="version", version=f"xtree {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_command(name, help_text, **extra_flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--output-dir", default=None, help="override config output_dir")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--format", choices=["json", "table"], default="json",
                       help="stdout format for results")
        for flag, kwargs in extra_flags.items():
            p.add_argument(flag, **kwargs)
        return p

    add_config_command(
        "preprocess", "ingest, screen, split, balance, and checkpoint the data",
        **{"--strict-no-leak": dict(action="store_true",
                                    help="fit all screens/transforms on the train split only")},
    )
    add_config_command("train", "fit every configured model on the final train checkpoint")
    add_config_command(
        "evaluate", "metrics, cross-validation, and timing for every model",
        **{"--paper-order": dict(action="store_true",
                                 help="cross-validate over the pre-balanced training matrix")},
    )
    add_config_command("explain", "attributions and Morris screening for the decision tree")
    add_config_command("report", "consolidate all artifacts into report.json")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset with planted rules")
    p_synth.add_argument("--rows", type=int, required=True)
    p_synth.add_argument("--features", type=int, required=True)
    p_synth.add_argument("--classes", type=int, required=True)
    p_synth.add_argument("--plant", default=None,
                         help="planted-rule spec: a JSON file path or inline JSON")
    p_synth.add_argument("--priors", default=None,
                         help="comma-separated class priors (default: imbalanced for 3 classes)")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output CSV path")
    return parser


def _load_pipeline(args) -> Pipeline:
    config = load_config(args.config)
    if args.output_dir is not None:
        config = replace(config, output_dir=Path(args.output_dir))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "strict_no_leak", False):
        config = replace(config,
                         preprocessing=replace(config.preprocessing, strict_no_leak=True))
    if getattr(args, "paper_order", False):
        config = replace(config, paper_order_cv=True)
    return Pipeline(config)


def _run_command(args) -> int:
    if args.command == "synth":
        plant = None
        if args.plant:
            raw = Path(args.plant)
            text = raw.read_text(encoding="utf-8") if raw.exists() else args.plant
            plant = json.loads(text)
        priors = None
        if args.priors:
            priors = [float(v) for v in args.priors.split(",")]
        values, labels, sidecar = synth.generate_dataset(
            args.rows, args.features, args.classes, plant, args.seed, priors
        )
        path = synth.write_dataset(args.out, values, labels, sidecar)
        print(f"wrote {path} ({args.rows} rows) and {path}.truth.json")
        return EXIT_OK

    pipeline = _load_pipeline(args)
    if args.command == "preprocess":
        summary = pipeline.preprocess()
        print(json.dumps(summary, indent=2, sort_keys=True))
    elif args.command == "train":
        kinds = pipeline.train()
        print(f"trained models: {', '.join(kinds)}")
    elif args.command == "evaluate":
        pipeline.evaluate()
        print(f"evaluation written under {pipeline.paths.eval}")
    elif args.command == "explain":
        pipeline.explain()
        print(f"explanations written under {pipeline.paths.explain}")
    elif args.command == "report":
        report = pipeline.report()
        if args.format == "table":
            print(format_report_table(report), end="")
        else:
            print(f"report written to {pipeline.paths.report}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    stage = "xtree"
    try:
        args = parser.parse_args(argv)
        stage = args.command
        return _run_command(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ModelSpecError) as exc:
        print(f"{stage}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergenceError, MlpDivergenceError, ArithmeticError) as exc:
        print(f"{stage}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"{stage}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
