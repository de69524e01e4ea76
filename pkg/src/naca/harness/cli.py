"""Command-line entry point: ``naca run | adversary | bench``.

The exit status is 0 only when every assertion of the command held: all
scenario expectations passed, the adversary found no soundness violations,
or every benchmarked mode stayed under 100% mean overhead.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from naca.harness.adversary import adversary_suite
from naca.harness.bench import DEFAULT_GRID, BenchMode, bench, write_csv
from naca.harness.scenario import ScenarioError, run_scenario, shipped_scenarios

MODE_CHOICES = ["compile", "submit", "submit-withdraw", "all"]


def _cmd_run(args: argparse.Namespace) -> int:
    paths = args.scenario or [str(p) for p in shipped_scenarios()]
    ok = True
    audit_chunks = []
    for path in paths:
        try:
            report = run_scenario(path, seed=args.seed)
        except ScenarioError as exc:
            print(f"schema error in {path}: {exc}", file=sys.stderr)
            return 2
        print("\n".join(report.summary_lines()))
        audit_chunks.append(report.audit_jsonl)
        ok = ok and report.passed
    if args.audit:
        Path(args.audit).write_text("".join(audit_chunks))
    return 0 if ok else 1


def _cmd_adversary(args: argparse.Namespace) -> int:
    summary = adversary_suite(seed=args.seed, n_runs=args.runs)
    print("\n".join(summary.lines()))
    return 0 if summary.violations == 0 else 1


def _cmd_bench(args: argparse.Namespace) -> int:
    modes = list(BenchMode) if args.mode == "all" else [BenchMode.parse(args.mode)]
    results = [bench(m, n=args.runs, grid=args.grid, seed=args.seed) for m in modes]
    for r in results:
        print("\n".join(r.lines()))
    if args.csv:
        print(f"wrote {write_csv(results, args.csv)}")
    return 0 if all(r.overhead < 1.0 for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="naca", description="Network access control pipeline harness")
    parser.add_argument("-v", "--verbose", action="store_true", help="log component warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenario files (all shipped scenarios if none given)")
    run.add_argument("scenario", nargs="*", help="scenario JSON file or shipped scenario name")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--audit", metavar="OUT.jsonl", help="write the audit trail as JSON lines")
    run.set_defaults(func=_cmd_run)

    adv = sub.add_parser("adversary", help="randomised attack campaigns")
    adv.add_argument("--runs", type=int, default=1000)
    adv.add_argument("--seed", type=int, default=0)
    adv.set_defaults(func=_cmd_adversary)

    b = sub.add_parser("bench", help="overhead micro-benchmark")
    b.add_argument("--mode", choices=MODE_CHOICES, default="all")
    b.add_argument("--runs", type=int, default=40)
    b.add_argument("--grid", type=int, default=DEFAULT_GRID, help="side length of the generated grid topology")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", metavar="OUT.csv")
    b.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
