"""Command-line front end.

    barycenter run CONFIG [--seed N] [--out PATH] [--format csv|json]
    barycenter validate [SUITE] [--out PATH] [--format csv|json]
    barycenter shift-box --min A B ... --max C D ...

Exit codes: 0 success, 1 configuration error, 2 oracle error,
3 degenerate mass, 4 failed validation check.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from . import experiment, validation
from .errors import ConfigError, DegenerateMass, InvalidValue, OracleError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ORACLE = 2
EXIT_DEGENERATE = 3
EXIT_CHECK = 4


def _error(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_run(config_path: str, seed: Optional[int] = None, out: Optional[str] = None, fmt: Optional[str] = None) -> int:
    try:
        config = experiment.load_config(config_path)
    except ConfigError as exc:
        return _error(str(exc), EXIT_CONFIG)
    try:
        result = experiment.run_experiment(config, seed=seed)
    except OracleError as exc:
        return _error(str(exc), EXIT_ORACLE)
    except DegenerateMass as exc:
        return _error(str(exc), EXIT_DEGENERATE)
    fmt = fmt or config.format
    output = out or config.output
    if output is None:
        render = experiment.rows_csv if fmt == "csv" else experiment.rows_json
        for record in result.records:
            sys.stdout.write(render(record, config.shift))
        print(json.dumps(result.summary(), indent=2), file=sys.stderr)
    else:
        paths = experiment.write_outputs(result, output, fmt)
        print(f"wrote {len(paths['rows'])} trace file(s) and {paths['summary']}", file=sys.stderr)
    if result.degenerate:
        return _error("total mass became degenerate", EXIT_DEGENERATE)
    return EXIT_OK


def cmd_validate(suite: str = "all", out: Optional[str] = None, fmt: str = "json") -> int:
    try:
        results = validation.run_checks(suite)
    except KeyError as exc:
        return _error(str(exc.args[0]), EXIT_CONFIG)
    print(validation.format_table(results))
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(validation.format_report(results, fmt))
    failed = [r.check_id for r in results if not r.passed]
    if failed:
        return _error(f"failed checks: {', '.join(failed)}", EXIT_CHECK)
    return EXIT_OK


def cmd_shift_box(box_min: Sequence[float], box_max: Sequence[float]) -> int:
    try:
        shift = experiment.shift_box(box_min, box_max)
    except InvalidValue as exc:
        return _error(str(exc), EXIT_CONFIG)
    print(json.dumps(shift.to_dict()))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # Usage errors are configuration errors; argparse would exit with 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="barycenter", description="Barycenter method experiments and checks")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the searches described by a JSON config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="base seed; repetition k uses seed + k")
    run.add_argument("--out", help="trace path; a .summary.json is written beside it")
    run.add_argument("--format", choices=experiment.FORMATS)

    val = sub.add_parser("validate", help="run registered statistical checks")
    val.add_argument("suite", nargs="?", default="all", help="suite name, check id or 'all'")
    val.add_argument("--out", help="write a machine-readable report here")
    val.add_argument("--format", choices=experiment.FORMATS, default="json")

    box = sub.add_parser("shift-box", help="offset moving a box into the positive orthant")
    box.add_argument("--min", dest="box_min", type=float, nargs="+", required=True)
    box.add_argument("--max", dest="box_max", type=float, nargs="+", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.out, args.format)
    if args.command == "validate":
        return cmd_validate(args.suite, args.out, args.format)
    return cmd_shift_box(args.box_min, args.box_max)


if __name__ == "__main__":
    sys.exit(main())
