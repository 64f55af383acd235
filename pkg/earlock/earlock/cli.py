# -*- coding: utf-8 -*-
"""``earlock`` command-line driver."""
from __future__ import annotations

import argparse
import importlib
import json
import logging
import sys

from earlock import __version__, hooks
from earlock.earlock.config import load_run_config
from earlock.earlock.exceptions import EarlockError
from earlock.earlock.synthetic import DEFAULT_SIZE
from earlock.earlock.utils import log_error, setup_logging

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_ERROR = 2


def get_attr(dotted: str):
    """Resolve ``package.module.attr`` from the hooks command registry."""
    module, _, attr = dotted.rpartition(".")
    return getattr(importlib.import_module(module), attr)


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="PATH", help="JSON run-config file")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")


def _matching(parser: argparse.ArgumentParser, default_rule: str):
    parser.add_argument("--rule", choices=("concat", "ds"), default=default_rule)
    parser.add_argument("--metric", choices=("euclid", "nn"), default="euclid")
    parser.add_argument("--no-segmentation", action="store_true",
                        help="match whole-image keypoints (baseline)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earlock", description=hooks.app_description)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded synthetic dataset")
    p.add_argument("out_dir")
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--probes", type=int, default=1)
    p.add_argument("--width", type=int, default=DEFAULT_SIZE[0])
    p.add_argument("--height", type=int, default=DEFAULT_SIZE[1])
    p.add_argument("--noise", type=float, default=0.0, help="sensor noise sigma on ear pixels")
    p.add_argument("--max-rotation", type=float, default=0.0, help="degrees")
    p.add_argument("--calibration-dir")
    p.add_argument("--calibration-subjects", type=int, default=0)
    _common(p)

    p = sub.add_parser("enroll", help="enroll one reference image per subject")
    p.add_argument("dataset_dir")
    p.add_argument("store_dir")
    p.add_argument("--dump-slices", metavar="DIR")
    _common(p)

    p = sub.add_parser("identify", help="rank the gallery against a probe image")
    p.add_argument("probe_path")
    p.add_argument("store_dir")
    p.add_argument("--top", type=int, metavar="K")
    p.add_argument("--out", metavar="CSV", help="write the ranking as a scores CSV")
    _matching(p, "concat")
    _common(p)

    p = sub.add_parser("verify", help="accept or reject a claimed identity")
    p.add_argument("probe_path")
    p.add_argument("claimed_id")
    p.add_argument("store_dir")
    _matching(p, "ds")
    _common(p)

    p = sub.add_parser("evaluate", help="identification and verification reports over a probe split")
    p.add_argument("dataset_dir")
    p.add_argument("store_dir")
    p.add_argument("out_dir")
    p.add_argument("--plots", dest="plots_enabled", action="store_true", help="also write SVG curves")
    p.add_argument("--no-segmentation", action="store_true")
    p.add_argument("--dump-slices", metavar="DIR")
    _common(p)

    p = sub.add_parser("calibrate", help="pick thresholds at the equal-error point")
    p.add_argument("calibration_dir")
    p.add_argument("store_dir")
    p.add_argument("--write-config", metavar="PATH", help="merge the thresholds into this JSON file")
    _common(p)
    return parser


def _print_summary(command: str, summary: dict):
    if command == "identify":
        print(f"probe {summary['probe']} ({summary['rule']}/{summary['metric']})")
        for row in summary["ranking"]:
            print(f"{row['rank']:>3}  {row['subject']:<20} {row['score']:<12.6g} color {row['color']:.4g}")
        return
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    options = {k: v for k, v in vars(args).items()
               if k not in ("command", "config", "seed", "verbose", "quiet")}
    try:
        config = load_run_config(args.config, seed=args.seed)
        summary = get_attr(hooks.commands[args.command])(config=config, **options)
    except EarlockError as e:
        log_error(str(e), title=f"earlock {args.command}")
        print(f"earlock {args.command}: {e}", file=sys.stderr)
        return EXIT_ERROR
    _print_summary(args.command, summary)
    if args.command == "verify" and not summary["accept"]:
        return EXIT_REJECT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
