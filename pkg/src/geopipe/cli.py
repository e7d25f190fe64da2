"""Command line entry point: ``simulate``, ``sweep``, ``verify`` and ``scenario``.

Exit codes: 0 success, 1 usage or I/O error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from .harness import (
    AXES,
    DEFAULT_SWEEPS,
    FORMATS,
    SweepResult,
    SweepSpec,
    emit_report,
    load_summary,
    run_sweep,
    simulate,
    table_text,
)
from .scenario import ScenarioError, dump_scenario, load_scenario
from .simulator import MAIN_POLICIES, POLICIES, InfeasibleScenario, verify_invariants

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _policies(text: str, default: Sequence[str]) -> List[str]:
    if text is None:
        return list(default)
    if text == "all":
        return list(POLICIES)
    if text == "main":
        return list(MAIN_POLICIES)
    names = [p.strip() for p in text.split(",") if p.strip()]
    bad = [p for p in names if p not in POLICIES]
    if bad or not names:
        raise UsageError(f"unknown policy {', '.join(bad) or text!r}; choose from {', '.join(POLICIES)}")
    return names


def _values(text: str, axis: str) -> List[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be a comma-separated list of numbers, got {text!r}") from None
    if axis == "jobs":
        if any(v != int(v) for v in vals):
            raise UsageError("job counts must be integers")
        return [int(v) for v in vals]
    return vals


def _scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "bw_scale", None) is not None:
        sc = replace(sc, bw_scale=args.bw_scale)
    if getattr(args, "gpu_scale", None) is not None:
        sc = replace(sc, gpu_scale=args.gpu_scale)
    if getattr(args, "jobs", None) is not None:
        sc = replace(sc, job_count=args.jobs)
    if getattr(args, "strict_fcfs", False):
        sc = replace(sc, strict_fcfs=True)
    return sc


def _emit(cells, args):
    if args.out:
        for p in emit_report(cells, args.format, args.out):
            print(f"wrote {p}")


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    result = simulate(sc, _policies(args.policy, ["BACE"]), args.seed)
    for c in result.cells:
        r = c.report
        print(f"{c.policy:18s} jobs={len(r.records):3d} avg_jct={r.avg_jct / 3600:12.3f} h"
              f"  total_cost=${r.total_cost:12.3f}")
    if any(c.policy == "BACE" for c in result.cells) and len(result.cells) > 1:
        print(table_text(result))
    _emit(result.cells, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    policies = _policies(args.policy, MAIN_POLICIES)
    if args.axis is None:
        if args.values:
            raise UsageError("--values needs --axis")
        specs = [SweepSpec(a, v, tuple(policies)) for a, v in DEFAULT_SWEEPS.items()]
    else:
        vals = _values(args.values, args.axis) if args.values else list(DEFAULT_SWEEPS[args.axis])
        try:
            specs = [SweepSpec(args.axis, tuple(vals), tuple(policies))]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    cells = []
    for spec in specs:
        res: SweepResult = run_sweep(sc, spec, args.seed)
        print(table_text(res))
        print()
        cells.extend(res.cells)
    _emit(cells, args)
    return EXIT_OK


def cmd_verify(args) -> int:
    pairs = load_summary(args.report)
    bad = 0
    for rep, sc in pairs:
        problems = verify_invariants(rep, sc)
        status = "ok" if not problems else f"{len(problems)} violation(s)"
        print(f"{rep.policy:18s} {rep.scenario_hash} {status}")
        for p in problems:
            print(f"  {p}")
        bad += bool(problems)
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_scenario(args) -> int:
    sys.stdout.write(dump_scenario(_scenario(args)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geopipe", description="Geo-distributed pipeline training scheduler simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out=True):
        p.add_argument("--scenario", default="default", help="built-in name or YAML path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--strict-fcfs", action="store_true", help="head-of-line blocking queue")
        if out:
            p.add_argument("--out", help="directory for report files")
            p.add_argument("--format", choices=FORMATS, default="both")

    s = sub.add_parser("simulate", help="run one scenario under one or more policies")
    common(s)
    s.add_argument("--policy", help="policy name, comma list, 'main' or 'all' (default BACE)")
    s.add_argument("--bw-scale", type=float)
    s.add_argument("--gpu-scale", type=float)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="sensitivity sweep normalized to BACE")
    common(w)
    w.add_argument("--axis", choices=AXES, help="omit to run the three default sweeps")
    w.add_argument("--values", help="comma-separated factors or job counts")
    w.add_argument("--policy", help="comma list, 'main' (default) or 'all'")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="replay a summary.json and check invariants")
    v.add_argument("--report", required=True)
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("scenario", help="print a resolved scenario as YAML")
    common(d, out=False)
    d.add_argument("--bw-scale", type=float)
    d.add_argument("--gpu-scale", type=float)
    d.add_argument("--jobs", type=int)
    d.set_defaults(func=cmd_scenario)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError, InfeasibleScenario, ValueError, OSError) as exc:
        print(f"geopipe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
