"""Command-line entry point: ``fundingiv <command> [options]``.

Exit codes: 0 success, 2 config error, 3 data error, 4 estimation error.
Failures print one JSON object ``{"error": {...}}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .pipeline import (
    COMMAND_STEPS,
    EXIT_CONFIG,
    EXIT_OK,
    INPUT_NAMES,
    ConfigError,
    PipelineError,
    load_config,
    run_pipeline,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fundingiv", description="IV estimates of research funding effects.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "build the scholar-year panel",
        "topics": "fit LDA on grant texts and write the keyword table",
        "instruments": "construct the three instruments",
        "estimate": "OLS and 2SLS tables",
        "diagnose": "IV diagnostics table",
        "placebo": "pseudo-group placebo regressions",
        "windows": "first-stage strength across instrument windows",
        "synth": "write a synthetic input set with a known effect",
        "run": "full pipeline",
    }
    for name in COMMAND_STEPS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--input-dir", help="directory holding scholars.csv, grants.csv, ... ")
        for inp in INPUT_NAMES:
            p.add_argument(f"--{inp}", help=f"path to {inp}.csv")
        p.add_argument("--format", action="append", choices=("text", "json", "csv"), dest="formats",
                       help="table format (repeatable)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any config value")
        p.add_argument("--dry-run", action="store_true", help="validate the config and write nothing")
        p.add_argument("-q", "--quiet", action="store_true")
    return parser


def _config_from_args(args):
    cfg = load_config(args.config)
    if args.input_dir is not None:
        cfg.update({"input_dir": args.input_dir})
    for inp in INPUT_NAMES:
        value = getattr(args, inp)
        if value is not None:
            setattr(cfg.inputs, inp, value)
    for assignment in args.set:
        cfg.set_dotted(assignment)
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.formats:
        cfg.formats = list(dict.fromkeys(args.formats))
    return cfg


def _fail(err: PipelineError) -> int:
    print(json.dumps(err.to_dict(), sort_keys=True), file=sys.stderr)
    return err.exit_code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        return _fail(PipelineError("cli", "load_config", args.config or "<defaults>", str(exc), EXIT_CONFIG,
                                   "ConfigError"))
    try:
        run_pipeline(cfg, args.command, dry_run=args.dry_run)
    except PipelineError as err:
        return _fail(err)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
