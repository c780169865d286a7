"""Scenario runner, parameter sweeps and CSV reporting.

Every run is normalized against a flat unit-resolution A* on the same map,
start, goal, cost model and heuristic.  Scenario and grid files are flat
``key = value`` text: one key per line, lists as comma separated values,
``#`` starts a comment.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

from .abstraction import (DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, AgentConfig, build_abstraction,
                          full_resolution_graph)
from .maps import resolve_map, shipped_name
from .merge import astar, gap_heuristic
from .network import POLICIES, TOPOLOGIES, solve, trace_records
from .refine import refine_loop
from .world import LETHAL, Tree, build_tree

MODES = ("abstract", "refined")


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    map: str
    agents: list
    start: tuple
    goal: tuple
    alpha: float = 1.0
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    topology: str = "broadcast"
    policy: str = "immediate"
    k: int = 1
    max_delay: int = 3
    seed: int = 0
    mode: str = "abstract"
    mover: int = 0
    name: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.topology not in TOPOLOGIES:
            raise ScenarioError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.policy not in POLICIES:
            raise ScenarioError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not self.agents:
            raise ScenarioError("a scenario needs at least one agent")
        self.agents = [tuple(float(x) for x in p) for p in self.agents]
        self.start = tuple(float(x) for x in self.start)
        self.goal = tuple(float(x) for x in self.goal)
        alphas = self.alpha if isinstance(self.alpha, (list, tuple)) else [self.alpha]
        if len(alphas) not in (1, len(self.agents)):
            raise ScenarioError("give one alpha or one per agent")

    def alphas(self) -> list:
        if isinstance(self.alpha, (list, tuple)):
            return list(self.alpha) * (len(self.agents) if len(self.alpha) == 1 else 1)
        return [self.alpha] * len(self.agents)

    def configs(self) -> list:
        return [AgentConfig(i, p, a, self.lambda1, self.lambda2)
                for i, (p, a) in enumerate(zip(self.agents, self.alphas()))]


REPORT_FIELDS = (
    "name", "map", "depth", "agents", "alpha", "mode", "topology", "policy", "seed",
    "solved", "cost", "baseline_cost", "normalized_cost", "expansions", "total_expansions",
    "messages", "baseline_expansions", "iterations", "backtracks", "error",
)
TIME_FIELDS = ("wall_time", "baseline_time", "normalized_time")


@dataclass
class RunReport:
    name: str
    map: str
    depth: int
    agents: int
    alpha: float
    mode: str
    topology: str
    policy: str
    seed: int
    solved: bool
    cost: float
    baseline_cost: float
    normalized_cost: float
    expansions: tuple
    total_expansions: int
    messages: int
    baseline_expansions: int
    iterations: int = 1
    backtracks: int = 0
    error: str = ""
    wall_time: float = 0.0
    baseline_time: float = 0.0
    normalized_time: float = math.nan
    path: tuple = ()

    def row(self, timing: bool = False) -> list:
        names = REPORT_FIELDS + (TIME_FIELDS if timing else ())
        return [_fmt(getattr(self, n)) for n in names]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf"
        return f"{v:.9g}"
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


# -- scenario files --------------------------------------------------------

_SCENARIO_KEYS = {f.name for f in fields(Scenario)}


def parse_kv(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {n}: expected 'key = value', got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ScenarioError(f"line {n}: empty key")
        if key in out:
            raise ScenarioError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(value: str) -> list:
    try:
        return [float(t) for t in value.split(",") if t.strip()]
    except ValueError as exc:
        raise ScenarioError(f"bad number list {value!r}") from exc


def parse_scenario(text: str) -> Scenario:
    """Agents are given as ``agent.0 = x, y``, ``agent.1 = ...`` in id order."""
    kv = parse_kv(text)
    agents = {}
    kw = {}
    for key, value in kv.items():
        if key.startswith("agent."):
            try:
                agents[int(key[6:])] = tuple(_floats(value))
            except ValueError as exc:
                raise ScenarioError(f"bad agent key {key!r}") from exc
        elif key in ("start", "goal"):
            kw[key] = tuple(_floats(value))
        elif key == "alpha":
            vals = _floats(value)
            kw[key] = vals[0] if len(vals) == 1 else vals
        elif key in ("lambda1", "lambda2"):
            kw[key] = float(value)
        elif key in ("k", "max_delay", "seed", "mover"):
            kw[key] = int(value)
        elif key in _SCENARIO_KEYS and key != "agents":
            kw[key] = value
        else:
            raise ScenarioError(f"unknown scenario key {key!r}")
    if sorted(agents) != list(range(len(agents))):
        raise ScenarioError("agent ids must be 0, 1, ... without gaps")
    for req in ("map", "start", "goal"):
        if req not in kw:
            raise ScenarioError(f"scenario is missing {req!r}")
    return Scenario(agents=[agents[i] for i in range(len(agents))], **kw)


def format_scenario(sc: Scenario) -> str:
    lines = [f"map = {sc.map}"]
    if sc.name:
        lines.append(f"name = {sc.name}")
    for i, p in enumerate(sc.agents):
        lines.append(f"agent.{i} = " + ", ".join(_fmt(x) for x in p))
    lines.append("start = " + ", ".join(_fmt(x) for x in sc.start))
    lines.append("goal = " + ", ".join(_fmt(x) for x in sc.goal))
    alpha = sc.alpha if isinstance(sc.alpha, (list, tuple)) else [sc.alpha]
    lines.append("alpha = " + ", ".join(_fmt(float(a)) for a in alpha))
    for key in ("lambda1", "lambda2", "topology", "policy", "k", "max_delay", "seed", "mode",
                "mover"):
        lines.append(f"{key} = {_fmt(getattr(sc, key))}")
    return "\n".join(lines) + "\n"


# -- running -----------------------------------------------------------------

_TREES: dict = {}
_BASELINES: dict = {}


def load_tree(ref: str) -> Tree:
    tree = _TREES.get(ref)
    if tree is None:
        tree = _TREES[ref] = build_tree(resolve_map(ref))
    return tree


@dataclass
class Baseline:
    cost: float
    expansions: int
    time: float
    path: object = None


def baseline(tree: Tree, start_cell, goal_cell, lambda1: float, lambda2: float,
             key=None) -> Baseline:
    """Flat A* over every unit cell with the same heuristic MAMS-A* uses."""
    cache_key = (key, start_cell, goal_cell, lambda1, lambda2) if key is not None else None
    if cache_key is not None and cache_key in _BASELINES:
        return _BASELINES[cache_key]
    graph = full_resolution_graph(tree, lambda1, lambda2)
    expanded: list = []
    t0 = time.perf_counter()
    path = astar(graph, start_cell, goal_cell, gap_heuristic(goal_cell, lambda2),
                 expanded=expanded)
    dt = time.perf_counter() - t0
    out = Baseline(path.cost if path else math.inf, len(expanded), dt, path)
    if cache_key is not None:
        _BASELINES[cache_key] = out
    return out


def _normalize(cost: float, base: float) -> float:
    if math.isinf(cost) or math.isinf(base):
        return math.nan
    if base == 0:
        return 1.0 if cost == 0 else math.inf
    return cost / base


def run_scenario(sc: Scenario, trace_out: list | None = None) -> RunReport:
    """One MAMS-A* run (abstract mode) or a full refinement loop (refined mode).

    When ``trace_out`` is a list the run's trace records are appended to it.
    """
    tree = load_tree(sc.map)
    configs = sc.configs()
    for c in configs:
        c.check_inside(tree)
    start_cell = tree.leaf_at(sc.start)
    goal_cell = tree.leaf_at(sc.goal)
    base = baseline(tree, start_cell, goal_cell, sc.lambda1, sc.lambda2, key=sc.map)
    tracing = trace_out is not None
    common = dict(name=sc.name, map=sc.map, depth=tree.depth, agents=len(configs),
                  alpha=float(configs[0].alpha), mode=sc.mode, topology=sc.topology,
                  policy=sc.policy, seed=sc.seed, baseline_cost=base.cost,
                  baseline_expansions=base.expansions, baseline_time=base.time)
    t0 = time.perf_counter()
    if sc.mode == "abstract":
        graphs = [build_abstraction(tree, c) for c in configs]
        run = solve(graphs, start_cell, goal_cell, topology=sc.topology, policy=sc.policy,
                    k=sc.k, max_delay=sc.max_delay, seed=sc.seed, tracing=tracing)
        wall = time.perf_counter() - t0
        if tracing:
            trace_out.extend(trace_records(run))
        cost = run.cost
        report = RunReport(solved=run.solved, cost=cost,
                           normalized_cost=_normalize(cost, base.cost),
                           expansions=tuple(run.expansions), total_expansions=run.total_expansions,
                           messages=run.messages, wall_time=wall,
                           path=run.path.vertices if run.path else (), **common)
    else:
        res = refine_loop(tree, configs, sc.start, sc.goal, sc.mover, topology=sc.topology,
                          policy=sc.policy, k=sc.k, max_delay=sc.max_delay, seed=sc.seed,
                          tracing=tracing)
        wall = time.perf_counter() - t0
        if tracing:
            trace_out.extend(res.trace)
        cost = res.path.cost if res.path else math.inf
        report = RunReport(solved=res.solved, cost=cost,
                           normalized_cost=_normalize(cost, base.cost),
                           expansions=(res.expansions,), total_expansions=res.expansions,
                           messages=res.messages, iterations=res.iterations,
                           backtracks=res.backtracks, wall_time=wall,
                           path=res.path.vertices if res.path else (), **common)
    reachable = math.isfinite(base.cost)
    # a coarse abstraction may bridge a gap that is closed at unit resolution,
    # so only refined runs must never find a path flat A* does not have
    if (reachable and not report.solved) or (sc.mode == "refined" and report.solved and not reachable):
        report.error = "baseline disagrees on reachability"
    report.normalized_time = wall / base.time if base.time > 0 else math.nan
    return report


# -- sweeps ------------------------------------------------------------------

GRID_LIST_KEYS = ("map", "depth", "agents", "alpha", "seed", "topology", "policy", "mode")


@dataclass
class Grid:
    map: list = field(default_factory=lambda: ["corridor"])
    depth: list = field(default_factory=lambda: [5])
    agents: list = field(default_factory=lambda: [1])
    alpha: list = field(default_factory=lambda: [1.0])
    seed: list = field(default_factory=lambda: [0])
    topology: list = field(default_factory=lambda: ["broadcast"])
    policy: list = field(default_factory=lambda: ["immediate"])
    mode: list = field(default_factory=lambda: ["abstract"])
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    k: int = 1
    max_delay: int = 3

    def cells(self) -> list:
        return list(itertools.product(self.map, self.depth, self.agents, self.alpha, self.seed,
                                      self.topology, self.policy, self.mode))


def parse_grid(text: str) -> Grid:
    kv = parse_kv(text)
    kw = {}
    for key, value in kv.items():
        items = [t.strip() for t in value.split(",") if t.strip()]
        if key in ("depth", "agents", "seed"):
            kw[key] = [int(t) for t in items]
        elif key == "alpha":
            kw[key] = [float(t) for t in items]
        elif key in GRID_LIST_KEYS:
            kw[key] = items
        elif key in ("lambda1", "lambda2"):
            kw[key] = float(value)
        elif key in ("k", "max_delay"):
            kw[key] = int(value)
        else:
            raise ScenarioError(f"unknown grid key {key!r}")
    return Grid(**kw)


def map_ref(kind: str, depth: int) -> str:
    """Shipped map names are ``<kind>-<depth>``; anything else is used as is."""
    if "." in kind or "/" in kind:
        return kind
    return shipped_name(kind, depth)[:-4]


def placements(tree: Tree, n: int, seed: int, start) -> list:
    """Agent 0 sits at the start; the rest occupy seeded random free cells.

    The first ``m`` placements for a seed do not depend on ``n``, so agent
    sets for growing ``n`` are nested.
    """
    rng = random.Random(seed)
    free = [idx for idx in itertools.product(range(tree.side), repeat=tree.d)
            if tree.levels[0][idx] < LETHAL]
    rng.shuffle(free)
    out = [tuple(start)]
    for idx in free:
        if len(out) == n:
            break
        out.append(tuple(i + 0.5 for i in idx))
    return out


def grid_scenarios(grid: Grid) -> list:
    out = []
    for kind, depth, n, alpha, seed, topology, policy, mode in grid.cells():
        ref = map_ref(kind, depth)
        tree = load_tree(ref)
        start = (0.5,) * tree.d
        goal = (tree.side - 0.5,) * tree.d
        name = f"{kind}-d{depth}-n{n}-a{_fmt(float(alpha))}-s{seed}-{topology}-{policy}-{mode}"
        out.append(Scenario(map=ref, agents=placements(tree, n, seed, start), start=start,
                            goal=goal, alpha=alpha, lambda1=grid.lambda1, lambda2=grid.lambda2,
                            topology=topology, policy=policy, k=grid.k,
                            max_delay=grid.max_delay, seed=seed, mode=mode, name=name))
    return out


def _safe_run(sc: Scenario) -> RunReport:
    try:
        return run_scenario(sc)
    except Exception as exc:  # recorded per row, the sweep goes on
        return RunReport(name=sc.name, map=sc.map, depth=-1, agents=len(sc.agents),
                         alpha=float(sc.alphas()[0]), mode=sc.mode, topology=sc.topology,
                         policy=sc.policy, seed=sc.seed, solved=False, cost=math.inf,
                         baseline_cost=math.nan, normalized_cost=math.nan, expansions=(),
                         total_expansions=0, messages=0, baseline_expansions=0,
                         error=f"{type(exc).__name__}: {exc}")


def sweep(scenarios, jobs: int = 1) -> list:
    """Run every scenario; rows come back in input order whatever ``jobs`` is."""
    scenarios = list(scenarios)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_safe_run, scenarios))
    return [_safe_run(sc) for sc in scenarios]


GROUP_KEYS = ("map", "agents", "alpha", "depth", "mode", "topology", "policy")
SUMMARY_FIELDS = GROUP_KEYS + ("runs", "solved", "mean_normalized_cost", "max_normalized_cost",
                               "mean_expansions", "max_expansions", "mean_messages",
                               "max_messages")


def aggregate(reports) -> list:
    """Mean and max per (map, agents, alpha, depth, mode, topology, policy) group."""
    groups: dict = {}
    for r in reports:
        groups.setdefault(tuple(getattr(r, k) for k in GROUP_KEYS), []).append(r)
    rows = []
    for key in sorted(groups, key=lambda t: tuple(map(str, t))):
        rs = groups[key]
        ok = [r for r in rs if r.solved and math.isfinite(r.normalized_cost)]
        nc = [r.normalized_cost for r in ok]
        ex = [r.total_expansions for r in rs]
        ms = [r.messages for r in rs]
        rows.append(list(key) + [
            len(rs), len(ok),
            statistics.fmean(nc) if nc else math.nan, max(nc) if nc else math.nan,
            statistics.fmean(ex), max(ex), statistics.fmean(ms), max(ms),
        ])
    return rows


GAP_FIELDS = ("name", "broadcast_cost", "chain_cost", "gap", "relative_gap")


def chain_gaps(reports) -> list:
    """Pair chain and broadcast rows that differ only in topology."""
    def key(r):
        return (r.map, r.depth, r.agents, r.alpha, r.mode, r.policy, r.seed)

    broadcast = {key(r): r for r in reports if r.topology == "broadcast"}
    rows = []
    for r in reports:
        if r.topology != "chain" or key(r) not in broadcast:
            continue
        b = broadcast[key(r)]
        gap = r.cost - b.cost if math.isfinite(r.cost) and math.isfinite(b.cost) else math.nan
        rel = gap / b.cost if math.isfinite(gap) and b.cost > 0 else math.nan
        rows.append([b.name.replace("-broadcast-", "-"), b.cost, r.cost, gap, rel])
    return rows


def write_csv(fh, header, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def reports_csv(reports, timing: bool = False) -> str:
    buf = io.StringIO()
    header = REPORT_FIELDS + (TIME_FIELDS if timing else ())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in reports:
        w.writerow(r.row(timing))
    return buf.getvalue()


def with_topology(sc: Scenario, topology: str) -> Scenario:
    name = sc.name.replace(f"-{sc.topology}-", f"-{topology}-") if sc.name else ""
    return replace(sc, topology=topology, name=name)


def trace_meta(sc: Scenario, report: RunReport) -> dict:
    return {"name": sc.name, "map": sc.map, "mode": sc.mode, "topology": sc.topology,
            "policy": sc.policy, "seed": sc.seed, "agents": [list(p) for p in sc.agents],
            "alpha": sc.alphas(), "start": list(sc.start), "goal": list(sc.goal),
            "solved": report.solved, "cost": _json_num(report.cost),
            "path": [str(v) for v in report.path] if report.path else None}


def _json_num(x: float):
    return x if math.isfinite(x) else None


def write_trace_file(fh, sc: Scenario, report: RunReport, records) -> None:
    """NDJSON: a ``meta`` header line, then one line per trace record."""
    fh.write(json.dumps({"meta": trace_meta(sc, report)}, sort_keys=True) + "\n")
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
