"""Command line entry point: ``eptrace run <config.json> [--out DIR] [--format csv|json] [--seed N]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import parse_config
from .errors import SchemaError
from .runner import emit, run


def build_parser():
    parser = argparse.ArgumentParser(prog="eptrace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"eptrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the task described by a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--seed", type=int, default=None,
                   help="seed for randomized helpers; echoed in the result")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config.read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"eptrace: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    except SchemaError as exc:
        print(f"eptrace: invalid config: {exc}", file=sys.stderr)
        return 1
    fmt = args.format or cfg.output.format
    out = args.out or cfg.output.dir
    env = run(cfg, seed=args.seed)
    try:
        emit(env, fmt, out)
    except OSError as exc:
        print(f"eptrace: cannot write results: {exc}", file=sys.stderr)
        return 1
    if env.error is not None:
        print(f"eptrace: {env.error['kind']}: {env.error['message']}", file=sys.stderr)
    elif env.warnings:
        print(f"eptrace: {len(env.warnings)} warning(s), see {Path(out) / 'result.json'}",
              file=sys.stderr)
    return env.exit_code


if __name__ == "__main__":
    sys.exit(main())
