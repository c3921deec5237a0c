"""Command line front end.

``casimirdiff permittivity|force|difference|calibrate|compare|simulate
--config <file> [--out <dir>] [--seed <u64>]``

Failures print one line ``error: <CODE>: <message>`` on stderr and exit 1.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import load_config
from .errors import CasimirError, ConfigError

COMMANDS = ("permittivity", "force", "difference", "calibrate", "compare", "simulate")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="casimirdiff", description="Casimir force difference pipeline")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--config-b", help="second configuration (difference only)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=_u64, help="random seed (overrides run.seed)")
    return p


def _load(path, args):
    cfg = load_config(path)
    if args.out:
        cfg.values["output"]["dir"] = args.out
    if args.seed is not None:
        cfg.values["run"]["seed"] = args.seed
    return cfg


def run(args: argparse.Namespace) -> list:
    cfg = _load(args.config, args)
    out = cfg["output"]["dir"]
    if args.command == "difference":
        if not args.config_b:
            raise ConfigError("difference needs --config-b")
        return [pipeline.cmd_difference(cfg, _load(args.config_b, args), out)]
    if args.config_b:
        raise ConfigError("--config-b is only used by difference")
    if args.command == "simulate":
        return list(pipeline.cmd_simulate(cfg, out).values())
    res = getattr(pipeline, f"cmd_{args.command}")(cfg, out)
    return list(res) if isinstance(res, tuple) else [res]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        paths = run(args)
    except CasimirError as exc:
        code = getattr(exc, "code", "E_GENERIC")
        msg = " ".join(str(exc).split())
        print(f"error: {code}: {msg}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: E_IO: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
