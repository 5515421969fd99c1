"""Command-line front end: ``qsn {qfi,echo,sweep,validate} <file>``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .errors import NumericalGuardError, ParseError, ValidationError
from .runner import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, run_scenario
from .scenario import load_scenario, validate

COMMAND_TASKS = {
    "qfi": {"qfi", "qfi_multi", "rayleigh", "nogo_passive", "cv_advantage"},
    "echo": {"echo"},
    "sweep": {"sweep_K"},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsn", description="Correlated-noise estimation with quantum sensor networks.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="scenario TOML file, or a run manifest JSON to reproduce")
    common.add_argument("--seed", type=int, help="override method.seed")
    common.add_argument("--out-dir", help="override output.path")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweep points")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("qfi", parents=[common], help="qfi, qfi_multi, rayleigh, nogo_passive, cv_advantage tasks")
    sub.add_parser("echo", parents=[common], help="echo protocol Monte-Carlo")
    sub.add_parser("sweep", parents=[common], help="sweep_K scaling table")
    sub.add_parser("validate", parents=[common], help="load and print the fully materialized scenario")
    return p


def _err(msg: str) -> None:
    print(f"qsn: error: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        _err("--threads must be >= 1")
        return EXIT_VALIDATION
    try:
        s = load_scenario(args.file)
        if args.seed is not None:
            s = validate(dataclasses.replace(s, method=dataclasses.replace(s.method, seed=args.seed)))
        if args.out_dir is not None:
            s = dataclasses.replace(s, output=dataclasses.replace(s.output, path=args.out_dir))
    except FileNotFoundError as exc:
        _err(f"cannot read {exc.filename}")
        return EXIT_VALIDATION
    except ParseError as exc:
        _err(str(exc))  # message already carries line and column
        return EXIT_VALIDATION
    except ValidationError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_VALIDATION
    except NumericalGuardError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL

    if args.command == "validate":
        if not args.quiet:
            print(json.dumps(s.to_dict(), indent=2))
        return EXIT_OK
    if s.task not in COMMAND_TASKS[args.command]:
        _err(f"task {s.task!r} is not run by 'qsn {args.command}'")
        return EXIT_VALIDATION

    command = " ".join(["qsn", *(argv if argv is not None else sys.argv[1:])])
    res = run_scenario(s, threads=args.threads, command=command)
    if res.exit_code != EXIT_OK:
        _err(res.error)
    elif not args.quiet:
        print(f"wrote {res.csv_path} ({len(res.rows)} rows)")
        print(f"wrote {res.manifest_path}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
