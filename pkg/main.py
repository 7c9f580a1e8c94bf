#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import argparse
import sys

from commands import COMMAND_CLASS_MAPPINGS, Workspace, run_command
from src.configs import load_run_config
from src.errors import NumericError, ValidationError
from src.utils import log, setup_logging

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def build_parser():
    epilog = "\n".join(f"  {name:<9} {cls.DESCRIPTION}" for name, cls in COMMAND_CLASS_MAPPINGS.items())
    parser = argparse.ArgumentParser(
        prog="softbrier",
        description="Soft-label gradient boosting and activity-recognition pipeline on a synthetic sensor house.",
        epilog="commands:\n" + epilog + "\n\nDefaults for every config key are listed in README.md.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMAND_CLASS_MAPPINGS), help="stage to run")
    parser.add_argument("--config", default=None, help="JSON run config (defaults built in when omitted)")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker cap; 1 and N give identical results")
    parser.add_argument("--out-dir", default=None, help="run directory (overrides paths.out_dir)")
    parser.add_argument("--pred", default=None, help="eval: prediction CSV")
    parser.add_argument("--labels", default=None, help="eval: frame-table or prediction CSV holding soft labels")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(verbose=args.verbose)
    try:
        if args.threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {args.threads}")
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        ws = Workspace(args.out_dir or cfg.paths.out_dir)
        run_command(args.command, cfg, ws, n_threads=args.threads, pred=args.pred, labels=args.labels)
    except NumericError as e:
        log(f"numeric error: {e}", message_type='error')
        return EXIT_NUMERIC
    except ValidationError as e:
        log(f"invalid input: {e}", message_type='error')
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
