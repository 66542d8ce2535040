"""``biochain`` command line: validate, solve, front, report, generate, export-lp.

Exit codes: 0 optimal or clean, 1 instance findings, 2 infeasible, 3 time or
node limit, 4 input error (files, flags), 5 numerical breakdown.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .domain import validate_instance
from .errors import (
    EpsilonError, InfeasibleError, InputError, InstanceValidationError, LimitReached, NumericalBreakdown, ParamError,
)
from .generator import PRESETS, generate_instance
from .ingest import fmt, load_instance, write_instance
from .model import apply_epsilon, build_model, write_lp
from .pareto import epsilon_front
from .report import build_report
from .solution import read_solution, write_solution
from .solve import solve_instance
from .solver import SolveOptions, Status

EXIT_OK, EXIT_FINDINGS, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3, 4, 5

STATUS_EXIT = {
    Status.OPTIMAL: EXIT_OK,
    Status.INFEASIBLE: EXIT_INFEASIBLE,
    Status.TIME_LIMIT: EXIT_LIMIT,
    Status.NODE_LIMIT: EXIT_LIMIT,
    Status.UNBOUNDED: EXIT_NUMERICAL,
}

log = logging.getLogger("biochain")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _options(args) -> SolveOptions:
    return SolveOptions(time_limit=args.time_limit, node_limit=args.node_limit)


def _load(manifest):
    instance = load_instance(manifest, validate=False)
    report = validate_instance(instance)
    if not report.passed:
        raise InstanceValidationError(report)
    return instance


def cmd_validate(args) -> int:
    instance = load_instance(args.manifest, validate=False)
    report = validate_instance(instance)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print("\n".join(f.code + " " + f.entity + ": " + f.message for f in report.findings) or "clean")
    return EXIT_OK if report.passed else EXIT_FINDINGS


def cmd_solve(args) -> int:
    instance = _load(args.manifest)
    node_log = None
    log_file = None
    if args.node_log:
        log_file = open(args.node_log, "w")
        node_log = lambda line: log_file.write(line + "\n")  # noqa: E731
    try:
        result = solve_instance(instance, epsilon=args.epsilon, opts=_options(args), node_log=node_log)
    finally:
        if log_file is not None:
            log_file.close()
    out = result.outcome
    print(f"status: {out.status.value}")
    if result.solution is not None:
        sol = result.solution
        print(f"cost: {sol.cost:.6f} EUR")
        print(f"ghg: {sol.ghg:.6f} kg CO2-eq")
        print(f"gap: {out.gap:.3g}  nodes: {out.nodes}")
        print("open: " + ", ".join(f"{k}@{z}" for z, k in sol.opened()))
    if args.out:
        summary = {
            "manifest": str(Path(args.manifest).resolve()),
            "status": out.status.value,
            "epsilon": args.epsilon,
            "gap": out.gap if out.has_solution else None,
            "bound": out.bound if out.has_solution else None,
            "nodes": out.nodes,
            "wall_time_s": out.wall_time,
        }
        if result.solution is not None:
            write_solution(result.solution, args.out, summary)
        else:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return STATUS_EXIT[out.status]


def cmd_front(args) -> int:
    instance = _load(args.manifest)
    front = epsilon_front(instance, args.points, _options(args), threads=args.threads)
    rows = []
    out_dir = Path(args.out) if args.out else None
    for i, p in enumerate(front.points):
        name = f"point_{i:02d}"
        if out_dir is not None:
            write_solution(p.solution, out_dir / name, {
                "manifest": str(Path(args.manifest).resolve()), "status": p.status.value,
                "epsilon": p.epsilon, "gap": p.gap, "nodes": p.nodes,
            })
        rows.append((p.epsilon, p.cost, p.ghg, name))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "front.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epsilon", "cost_eur", "ghg_kg", "solution_file"))
            for eps, f, g, name in rows:
                w.writerow((fmt(eps), fmt(f), fmt(g), name))
    print(f"{'#':>3}  {'epsilon_kg':>18}  {'cost_eur':>18}  {'ghg_kg':>18}")
    for i, (eps, f, g, _name) in enumerate(rows):
        print(f"{i:>3}  {eps:18.3f}  {f:18.3f}  {g:18.3f}")
    for note in front.notes:
        print(f"note: {note}")
    incomplete = any(not p.complete for p in front.points)
    return EXIT_LIMIT if incomplete else EXIT_OK


def cmd_report(args) -> int:
    solution, summary = read_solution(args.solution_dir)
    manifest = args.manifest or summary.get("manifest")
    if not manifest:
        raise ParamError("summary.json names no manifest; pass --manifest")
    instance = _load(manifest)
    report = build_report(instance, solution, summary)
    print(json.dumps(report.to_dict(), indent=2) if args.json else report.to_text())
    return EXIT_OK


def cmd_generate(args) -> int:
    params = PRESETS[args.preset]() if args.seed is None else PRESETS[args.preset](args.seed)
    manifest = write_instance(generate_instance(params), args.out)
    print(manifest.path)
    return EXIT_OK


def cmd_export_lp(args) -> int:
    model = build_model(_load(args.manifest))
    if args.epsilon is not None:
        model = apply_epsilon(model, args.epsilon)
    write_lp(model, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biochain", description="Multi-period biomass supply network planning")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check an instance for structural problems")
    p.add_argument("manifest")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    def limits(p):
        p.add_argument("--time-limit", type=float, default=None, metavar="SECONDS")
        p.add_argument("--node-limit", type=_positive_int, default=None)

    p = sub.add_parser("solve", help="minimise cost, optionally under a GHG cap")
    p.add_argument("manifest")
    p.add_argument("--epsilon", type=float, default=None, help="GHG cap in kg CO2-eq")
    p.add_argument("--out", default=None, help="directory for the solution files")
    p.add_argument("--node-log", default=None, help="write one line per branch-and-bound node here")
    limits(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("front", help="cost / GHG trade-off curve")
    p.add_argument("manifest")
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=_positive_int, default=None, help="overrides BIOCHAIN_THREADS")
    limits(p)
    p.set_defaults(func=cmd_front)

    p = sub.add_parser("report", help="cost breakdown and GHG totals of a solution directory")
    p.add_argument("solution_dir")
    p.add_argument("--manifest", default=None, help="instance to check against (default: the one in summary.json)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("generate", help="write a synthetic instance")
    p.add_argument("preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("export-lp", help="write the MILP in LP text format")
    p.add_argument("manifest")
    p.add_argument("output")
    p.add_argument("--epsilon", type=float, default=None)
    p.set_defaults(func=cmd_export_lp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InstanceValidationError as exc:
        print(exc.report.to_text(), file=sys.stderr)
        return EXIT_FINDINGS
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except LimitReached as exc:
        print(f"limit reached: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except NumericalBreakdown as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, EpsilonError, ParamError) as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"IO_ERROR: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
