"""Command line front end: ``mams plan|sweep|render|baseline|figure|maps``.

Exit status is 0 on success, 2 when the planner reports no path and 1 on
any error.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .abstraction import DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, build_abstraction
from .maps import write_shipped
from .network import POLICIES, TOPOLOGIES
from .render import merge_figure, read_trace, render_trace

log = logging.getLogger("mams")

EXIT_OK, EXIT_ERROR, EXIT_NO_PATH = 0, 1, 2


def _point(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated coordinates, got {text!r}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _overrides(args) -> dict:
    kw = {}
    for key in ("seed", "topology", "policy", "mode"):
        val = getattr(args, key, None)
        if val is not None:
            kw[key] = val
    return kw


def _load_scenario(path: str, args) -> bench.Scenario:
    sc = bench.parse_scenario(Path(path).read_text())
    return replace(sc, **_overrides(args))


def cmd_plan(args) -> int:
    sc = _load_scenario(args.scenario, args)
    records = [] if (args.trace or args.svg) else None
    report = bench.run_scenario(sc, trace_out=records)
    _emit(bench.reports_csv([report], timing=args.timing), args.output)
    if args.trace:
        with open(args.trace, "w") as fh:
            bench.write_trace_file(fh, sc, report, records)
    if args.svg:
        meta = bench.trace_meta(sc, report)
        Path(args.svg).write_text(render_trace(bench.load_tree(sc.map), meta, records))
    if report.error:
        log.warning("%s: %s", sc.name or args.scenario, report.error)
    return EXIT_OK if report.solved else EXIT_NO_PATH


def cmd_sweep(args) -> int:
    grid = bench.parse_grid(Path(args.grid).read_text())
    kw = _overrides(args)
    grid = replace(grid, **{k: [v] for k, v in kw.items()})
    scenarios = bench.grid_scenarios(grid)
    reports = bench.sweep(scenarios, jobs=args.jobs)
    _emit(bench.reports_csv(reports, timing=args.timing), args.output)
    if args.summary:
        with open(args.summary, "w", newline="") as fh:
            bench.write_csv(fh, bench.SUMMARY_FIELDS, bench.aggregate(reports))
    if args.gaps:
        with open(args.gaps, "w", newline="") as fh:
            bench.write_csv(fh, bench.GAP_FIELDS, bench.chain_gaps(reports))
    failed = [r for r in reports if r.error]
    for r in failed:
        log.warning("%s: %s", r.name, r.error)
    return EXIT_OK


def cmd_render(args) -> int:
    with open(args.trace) as fh:
        meta, records = read_trace(fh)
    ref = args.map or meta.get("map")
    if not ref:
        raise ValueError("the trace names no map; pass --map")
    Path(args.output).write_text(render_trace(bench.load_tree(ref), meta, records))
    return EXIT_OK


def cmd_figure(args) -> int:
    sc = _load_scenario(args.scenario, args)
    tree = bench.load_tree(sc.map)
    configs = sc.configs()
    graphs = [build_abstraction(tree, c) for c in configs]
    report = bench.run_scenario(replace(sc, mode="abstract"))
    svg = merge_figure(tree, graphs, [c.position for c in configs], path=report.path)
    Path(args.output).write_text(svg)
    return EXIT_OK


def cmd_baseline(args) -> int:
    tree = bench.load_tree(args.map)
    s, g = tree.leaf_at(args.start), tree.leaf_at(args.goal)
    base = bench.baseline(tree, s, g, args.lambda1, args.lambda2)
    buf = io.StringIO()
    rows = [[args.map, str(s), str(g), base.cost, base.expansions, len(base.path or ())]]
    bench.write_csv(buf, ("map", "start", "goal", "cost", "expansions", "length"), rows)
    _emit(buf.getvalue(), args.output)
    return EXIT_OK if base.path is not None else EXIT_NO_PATH


def cmd_maps(args) -> int:
    for p in write_shipped(args.outdir):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mams", description="Multi-agent multi-resolution A* planner")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp, mode=True):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--topology", choices=TOPOLOGIES)
        sp.add_argument("--policy", choices=POLICIES)
        if mode:
            sp.add_argument("--mode", choices=bench.MODES)

    sp = sub.add_parser("plan", help="run one scenario file, CSV row out")
    sp.add_argument("scenario")
    run_flags(sp)
    sp.add_argument("-o", "--output", help="CSV file (default stdout)")
    sp.add_argument("--trace", help="write an NDJSON trace here")
    sp.add_argument("--svg", help="write a picture of the run here")
    sp.add_argument("--timing", action="store_true", help="add wall time columns")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("sweep", help="run a grid file, one CSV row per cell")
    sp.add_argument("grid")
    run_flags(sp)
    sp.add_argument("-o", "--output", help="CSV file (default stdout)")
    sp.add_argument("--summary", help="write per-group mean/max CSV here")
    sp.add_argument("--gaps", help="write chain vs broadcast cost gaps here")
    sp.add_argument("-j", "--jobs", type=int, default=1)
    sp.add_argument("--timing", action="store_true", help="add wall time columns")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("render", help="draw a trace file as SVG")
    sp.add_argument("trace")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--map", help="map reference, if the trace does not name one")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("figure", help="five-panel merge picture of a scenario's first two agents")
    sp.add_argument("scenario")
    run_flags(sp, mode=False)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_figure)

    sp = sub.add_parser("baseline", help="flat unit-resolution A* between two points")
    sp.add_argument("map")
    sp.add_argument("start", type=_point)
    sp.add_argument("goal", type=_point)
    sp.add_argument("--lambda1", type=float, default=DEFAULT_LAMBDA1)
    sp.add_argument("--lambda2", type=float, default=DEFAULT_LAMBDA2)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("maps", help="regenerate the shipped maps into a directory")
    sp.add_argument("outdir")
    sp.set_defaults(func=cmd_maps)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; here 2 means no path
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        log.error("%s", exc)
        if args.verbose:
            raise
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
