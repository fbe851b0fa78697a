"""Command-line front end.

Exit codes (stable, also listed in the README):
  0  success / verdict "equal" or "true"
  1  inconclusive numerics or a target field that is not complete
  2  bad arguments
  3  verdict "separated" / "false"
  4  verdict "non-separable"
  5  verdict "unknown"
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .completion import (
    Completion,
    CompletionConfig,
    NotInChartError,
    TargetNotCompleteError,
    UnknownVerdictError,
)
from .expr import EvaluationError
from .geometry import OutsideDomainError
from .integrator import FlowStatus, IntegratorConfig, flow
from .render import (
    flow_csv,
    report_edges_csv,
    report_locations_csv,
    report_svg,
    report_text,
)
from .scenarios import Scenario, ScenarioFormatError, resolve_scenario
from .separability import (
    EQUAL,
    NON_SEPARABLE,
    SEPARATED,
    UNKNOWN,
    ProbeConfig,
    identification_report,
    separability_test,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_FALSE = 3
EXIT_NONSEP = 4
EXIT_UNKNOWN = 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _parse_point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise CliError(f"cannot parse point {text!r}; expected comma-separated numbers")


def _parse_tagged(text: str) -> tuple[float, tuple[float, ...]]:
    if ":" not in text:
        raise CliError(f"cannot parse tagged point {text!r}; expected 'tag:x1,x2,...'")
    tag_text, point_text = text.split(":", 1)
    try:
        tag = float(tag_text)
    except ValueError:
        raise CliError(f"cannot parse tag in {text!r}")
    return tag, _parse_point(point_text)


def _integrator_cfg(scenario: Scenario, args) -> IntegratorConfig:
    cfg = scenario.config
    overrides = {}
    for name in ("rel_tol", "abs_tol", "max_step", "blowup_norm", "escape_refine_tol"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides) if overrides else cfg


def _completion(scenario: Scenario, args) -> Completion:
    ccfg = CompletionConfig()
    if getattr(args, "match_tol", None) is not None:
        ccfg = replace(ccfg, match_tol=args.match_tol)
    return Completion(scenario.field, _integrator_cfg(scenario, args), ccfg)


def _probe_cfg(args) -> ProbeConfig:
    pcfg = ProbeConfig()
    if getattr(args, "seed", None) is not None:
        pcfg = replace(pcfg, seed=args.seed)
    return pcfg


def _fmt_point(x) -> str:
    return "(" + ", ".join(f"{c:.12g}" for c in x) + ")"


def cmd_flow(args) -> int:
    scenario = resolve_scenario(args.scenario)
    cfg = _integrator_cfg(scenario, args)
    outcome = flow(scenario.field, _parse_point(args.x0), args.t, cfg)
    print(f"status: {outcome.status.value}")
    if outcome.completed:
        print(f"endpoint: {_fmt_point(outcome.endpoint)}")
    if outcome.escaped:
        print(f"escape_time: {outcome.escape_time_estimate:.12g}")
    stats = outcome.stats
    print(f"steps: {stats.steps}  rejected: {stats.rejected}  "
          f"max_error_estimate: {stats.max_error_estimate:.3g}")
    if args.csv:
        Path(args.csv).write_text(flow_csv(outcome, scenario.field.dimension),
                                  encoding="utf-8")
        print(f"dense samples written to {args.csv}")
    return EXIT_FAILURE if outcome.status is FlowStatus.INCONCLUSIVE else EXIT_OK


def cmd_window(args) -> int:
    from .integrator import existence_window

    scenario = resolve_scenario(args.scenario)
    cfg = _integrator_cfg(scenario, args)
    window = existence_window(scenario.field, _parse_point(args.x0), args.horizon, cfg)
    minus = f"{window.t_minus:.12g}" + ("" if window.minus_bounded else " (horizon)")
    plus = f"{window.t_plus:.12g}" + ("" if window.plus_bounded else " (horizon)")
    print(f"window: ({minus}, {plus})")
    print(f"quality: {window.quality}")
    return EXIT_OK


def cmd_same_point(args) -> int:
    scenario = resolve_scenario(args.scenario)
    comp = _completion(scenario, args)
    sp, xp = _parse_tagged(args.p)
    sq, xq = _parse_tagged(args.q)
    try:
        equal = comp.same_point(comp.embed(sp, xp), comp.embed(sq, xq))
    except UnknownVerdictError as err:
        print(f"unknown: {err}")
        return EXIT_UNKNOWN
    print("equal" if equal else "distinct")
    return EXIT_OK if equal else EXIT_FALSE


def cmd_separability(args) -> int:
    scenario = resolve_scenario(args.scenario)
    comp = _completion(scenario, args)
    sp, xp = _parse_tagged(args.p)
    sq, xq = _parse_tagged(args.q)
    verdict = separability_test(comp, comp.embed(sp, xp), comp.embed(sq, xq),
                                _probe_cfg(args))
    print(f"verdict: {verdict.kind}")
    if verdict.evidence:
        print("evidence (radius -> image distance):")
        for level in verdict.evidence:
            print(f"  {level.radius:.6g} -> {level.image_distance:.6g}")
    if verdict.note:
        print(f"note: {verdict.note}")
    return {EQUAL: EXIT_OK, SEPARATED: EXIT_FALSE, NON_SEPARABLE: EXIT_NONSEP,
            UNKNOWN: EXIT_UNKNOWN}[verdict.kind]


def cmd_orbit(args) -> int:
    scenario = resolve_scenario(args.scenario)
    comp = _completion(scenario, args)
    if args.base:
        result = comp.same_orbit_base(_parse_point(args.p), _parse_point(args.q),
                                      args.horizon)
    else:
        sp, xp = _parse_tagged(args.p)
        sq, xq = _parse_tagged(args.q)
        result = comp.same_orbit(comp.embed(sp, xp), comp.embed(sq, xq), args.horizon)
    if result is None:
        print("unknown")
        return EXIT_UNKNOWN
    print("same orbit" if result else "different orbits")
    return EXIT_OK if result else EXIT_FALSE


def cmd_lift(args) -> int:
    scenario = resolve_scenario(args.scenario)
    comp = _completion(scenario, args)
    morphism = scenario.morphism(args.morphism)
    sp, xp = _parse_tagged(args.p)
    try:
        image = comp.lift(morphism, comp.embed(sp, xp))
    except TargetNotCompleteError as err:
        print(f"target not complete: {err}")
        return EXIT_FAILURE
    except UnknownVerdictError as err:
        print(f"unknown: {err}")
        return EXIT_UNKNOWN
    print(_fmt_point(image))
    return EXIT_OK


def cmd_report(args) -> int:
    scenario = resolve_scenario(args.scenario)
    comp = _completion(scenario, args)
    grids = scenario.grids
    tags = grids.tags
    if args.tags:
        tags = tuple(float(v) for v in args.tags.split(","))
    counts = grids.counts
    if args.grid:
        counts = tuple(int(v) for v in args.grid.lower().split("x"))
        if len(counts) != scenario.field.dimension:
            raise CliError(f"--grid must give {scenario.field.dimension} count(s)")
    from .geometry import grid_points

    base = grid_points(grids.box, counts)
    report = identification_report(
        comp, tags, base, _probe_cfg(args), scenario_name=scenario.name, box=grids.box,
        counts=counts, jobs=args.jobs)
    text = report_text(report)
    print(text, end="")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "locations.csv").write_text(report_locations_csv(report), encoding="utf-8")
    (out / "edges.csv").write_text(report_edges_csv(report), encoding="utf-8")
    if scenario.field.dimension == 2:
        (out / "loci.svg").write_text(report_svg(report), encoding="utf-8")
    print(f"report files written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcomplete",
        description="Interrogate the flow completion of a vector field: flow maps "
                    "with escape detection, point identity across charts, "
                    "non-separability probing, doubled-locus reports, morphism lifts.")
    parser.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)
    parser.add_argument("--abs-tol", dest="abs_tol", type=float, default=None)
    parser.add_argument("--max-step", dest="max_step", type=float, default=None)
    parser.add_argument("--match-tol", dest="match_tol", type=float, default=None)
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for probe directions (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="integrate from a point and report the outcome")
    p.add_argument("scenario")
    p.add_argument("--x0", required=True, help="start point, e.g. -1,0")
    p.add_argument("--t", required=True, type=float)
    p.add_argument("--csv", default=None, help="write dense samples as CSV")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("window", help="estimate the existence window around t=0")
    p.add_argument("scenario")
    p.add_argument("--x0", required=True)
    p.add_argument("--horizon", type=float, default=10.0)
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("same-point", help="are two tagged points the same completion point?")
    p.add_argument("scenario")
    p.add_argument("--p", required=True, help="tagged point, e.g. -2:-1,0")
    p.add_argument("--q", required=True)
    p.set_defaults(func=cmd_same_point)

    p = sub.add_parser("separability", help="probe a pair of completion points")
    p.add_argument("scenario")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.set_defaults(func=cmd_separability)

    p = sub.add_parser("orbit", help="are two points on one orbit?")
    p.add_argument("scenario")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--base", action="store_true",
                   help="treat --p/--q as plain base points of M")
    p.add_argument("--horizon", type=float, default=None)
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("lift", help="lift a completion point along a scenario morphism")
    p.add_argument("scenario")
    p.add_argument("--morphism", required=True)
    p.add_argument("--p", required=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("report", help="doubled-locus identification report over a grid")
    p.add_argument("scenario")
    p.add_argument("--tags", default=None, help="comma-separated tag grid")
    p.add_argument("--grid", default=None, help="base grid counts, e.g. 41x41")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (ScenarioFormatError, FileNotFoundError, KeyError, OutsideDomainError,
            NotInChartError, EvaluationError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
