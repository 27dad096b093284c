"""Command line entry point: ``smom <experiment> [options]``.

Exit codes: 0 on success, 2 on a configuration error, 3 when an oracle-mode
row of a replication experiment has an undefined MSE.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE_NAN = 0, 2, 3

_KEYS = ("n", "reps", "K", "pairs", "M", "seed", "beta", "out", "full")


def _num_list(text, cast):
    """``"1,2,4"`` or an inclusive integer range ``"1:50"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":"))
            return tuple(cast(v) for v in range(lo, hi + 1))
        return tuple(cast(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}") from exc


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean {text!r}")


def _int(text):
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer {text!r}") from exc


_PARSE = {"n": lambda t: _num_list(t, int), "K": lambda t: _num_list(t, int),
          "beta": lambda t: _num_list(t, float), "reps": _int, "pairs": _int, "M": _int,
          "seed": _int, "out": str, "full": _bool}


def read_config_file(path):
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{path}:{num}: unknown key {key!r}")
        values[key] = _PARSE[key](val)
    return values


def build_parser():
    parser = argparse.ArgumentParser(prog="smom", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ex.EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file; command line flags take precedence")
        p.add_argument("--n")
        p.add_argument("--reps")
        p.add_argument("--K")
        p.add_argument("--pairs")
        p.add_argument("--M")
        p.add_argument("--seed")
        p.add_argument("--beta", help="value list, or an integer range lo:hi for are-curve")
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--full", action="store_true", default=None,
                       help=f"use {ex.FULL_REPS} replications")
    p = sub.add_parser("summarize", help="median (min, max) across pairs")
    p.add_argument("csv")
    p.add_argument("--out")
    return parser


def resolve_config(args) -> ex.ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in _KEYS:
        raw = getattr(args, key, None)
        if raw is not None:
            values[key] = raw if key == "full" else _PARSE[key](raw)
    full = values.pop("full", False)
    if full:
        values["reps"] = ex.FULL_REPS
    return ex.default_config(args.command, **values)


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "summarize":
        rows = ex.summarize(ex.read_rows(args.csv))
        _emit(ex.write_csv(rows, args.out, ex.SUMMARY_HEADER), args.out)
        return EXIT_OK
    cfg = resolve_config(args)
    if cfg.experiment == "are-curve":
        _emit(ex.write_csv(ex.run_are_curve(cfg.beta), cfg.out, ex.ARE_HEADER), cfg.out)
        return EXIT_OK
    if cfg.experiment == "trace":
        _emit(ex.write_csv(ex.run_testfunction_trace(cfg), cfg.out, ex.TRACE_HEADER), cfg.out)
        return EXIT_OK
    rows = ex.run_replications(cfg)
    _emit(ex.write_csv(rows, cfg.out), cfg.out)
    return EXIT_ORACLE_NAN if ex.oracle_nan(rows) else EXIT_OK


def main(argv=None):
    try:
        code = run(argv)
    except ConfigError as exc:
        print(f"smom: config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    sys.exit(code)


if __name__ == "__main__":
    main()
