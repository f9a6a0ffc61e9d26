"""Command line entry point.

Verbs:
    run <config>     execute the configured checks, write artifacts
    check <config>   parse the config and report admissibility only
    diff <a> <b>     numeric diff of two results.json files
    list-checks      names of the available checks

Exit codes: 0 all checks passed, 1 check failures, 2 execution error.
The environment variable BVPLAB_OUTPUT_ROOT prefixes all output paths.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, parse_config
from .runner import StageError, build_context, compare_runs, list_checks, run_experiment


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    report = run_experiment(config, write=not args.dry_run)
    for check in report.checks:
        verdict = "PASS" if check.passed else "FAIL"
        print(f"[{verdict}] {check.name}")
    print(f"admissibility: margin={report.admissibility['form_margin']:.6g} "
          f"eigenvalue={report.admissibility['eigenvalue']:.6g}")
    return 0 if report.all_passed else 1


def _cmd_check(args) -> int:
    config = parse_config(args.config)
    _, admissibility = build_context(config)
    print(json.dumps(admissibility, sort_keys=True, indent=2))
    return 0


def _cmd_diff(args) -> int:
    with open(args.a) as fh:
        results_a = json.load(fh)
    with open(args.b) as fh:
        results_b = json.load(fh)
    diff = compare_runs(results_a, results_b)
    print(json.dumps(diff, sort_keys=True, indent=2))
    return 0


def _cmd_list_checks(_args) -> int:
    for name in list_checks():
        print(name)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bvplab",
        description="Numerical laboratory for Schrodinger boundary value "
        "problems with measure data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--dry-run", action="store_true", help="skip artifact files")
    p_run.set_defaults(fn=_cmd_run)

    p_check = sub.add_parser("check", help="parse config and report admissibility")
    p_check.add_argument("config")
    p_check.set_defaults(fn=_cmd_check)

    p_diff = sub.add_parser("diff", help="diff two results.json files")
    p_diff.add_argument("a")
    p_diff.add_argument("b")
    p_diff.set_defaults(fn=_cmd_diff)

    p_list = sub.add_parser("list-checks", help="list available checks")
    p_list.set_defaults(fn=_cmd_list_checks)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, StageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
