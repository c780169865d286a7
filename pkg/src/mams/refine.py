"""Backtracking refinement: turn repeated abstract searches into a unit-cell path.

The moving agent re-abstracts the world around its current cell, the team
runs MAMS-A*, and the mover walks the leading run of unit cells of the
answer.  When no path exists from the current cell the mover steps back one
cell and forbids the edge it just used, so the same dead end is never
entered twice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .abstraction import (AgentConfig, MultiResGraph, build_abstraction, full_resolution_graph,
                          neighbors)
from .merge import Path, astar, gap_heuristic, merge_graphs
from .network import solve, trace_records
from .world import Node, Tree


def min_mover_alpha(d: int) -> float:
    """Smallest alpha for which the mover's cell and every node touching it are
    unit cells, so each search advances the mover by at least one step."""
    return math.sqrt(d) / 2


class RefinementBudgetExceeded(RuntimeError):
    pass


@dataclass
class RefinementState:
    position: tuple
    path: list
    forbidden: set = field(default_factory=set)
    iterations: int = 0
    backtracks: int = 0

    @property
    def cell(self) -> Node:
        return self.path[-1]


@dataclass
class RefineResult:
    path: Path | None
    state: RefinementState
    trace: list
    searches: int = 0
    expansions: int = 0
    messages: int = 0
    repairs: int = 0

    @property
    def solved(self) -> bool:
        return self.path is not None

    @property
    def iterations(self) -> int:
        return self.state.iterations

    @property
    def backtracks(self) -> int:
        return self.state.backtracks


def _cell_center(cell: Node) -> tuple:
    return tuple(i + 0.5 for i in cell.index)


def split_to_cells(graph: MultiResGraph, cells) -> MultiResGraph:
    """Split, in place, every vertex covering one of ``cells`` down to unit cells.

    Visited cells and forbidden edges are unit-level facts; a coarse vertex
    swallowing one of them would let a search step around the restriction.
    """
    tree = graph.tree
    for cell in cells:
        v = graph.containing(cell)
        while v is not None and v.depth > 0:
            kids = tree.children(v)
            graph.remove_vertex(v)
            for c in kids:
                graph.add_vertex(c)
            v = graph.containing(cell)
    return graph


def iteration_budget(tree: Tree) -> int:
    """Each iteration advances or forbids a fresh directed edge; both are finite."""
    cells = tree.side ** tree.d
    return 2 * cells * (3 ** tree.d) + 1


def refine_loop(tree: Tree, configs: Sequence[AgentConfig], start, goal, mover: int = 0, *,
                topology: str = "broadcast", policy: str = "immediate", k: int = 1,
                max_delay: int = 3, seed: int = 0, max_iterations: int | None = None,
                tracing: bool = False) -> RefineResult:
    """Walk from ``start`` to ``goal`` (world points) at unit resolution.

    Only agent ``mover`` relocates; the other agents keep their initial
    abstractions.  Returns a result whose ``path`` is ``None`` when the goal
    cannot be reached.
    """
    configs = list(configs)
    ids = [c.id for c in configs]
    if mover not in ids:
        raise ValueError(f"no agent with id {mover}")
    mi = ids.index(mover)
    if configs[mi].alpha < min_mover_alpha(tree.d):
        raise ValueError(f"moving agent needs alpha >= {min_mover_alpha(tree.d):.6g}, "
                         f"got {configs[mi].alpha}")
    for c in configs:
        c.check_inside(tree)
    start_cell = tree.leaf_at(start)
    goal_cell = tree.leaf_at(goal)
    lam1, lam2 = configs[mi].lambda1, configs[mi].lambda2
    stationary = {i: build_abstraction(tree, c) for i, c in enumerate(configs) if i != mi}
    unit = full_resolution_graph(tree, lam1, lam2)

    state = RefinementState(_cell_center(start_cell), [start_cell])
    pinned: set = set()
    budget = max_iterations or iteration_budget(tree)
    trace: list = []
    result = RefineResult(None, state, trace)

    while state.cell != goal_cell:
        if state.iterations >= budget:
            raise RefinementBudgetExceeded(f"no answer after {budget} iterations")
        state.iterations += 1
        it = state.iterations
        cfg = replace(configs[mi], position=state.position)
        # visited cells and forbidden-edge endpoints only ever accumulate, so the
        # stationary graphs are split incrementally
        fresh = [c for c in state.path if c not in pinned]
        pinned.update(fresh)
        for g in stationary.values():
            split_to_cells(g, fresh)
        graphs = [build_abstraction(tree, cfg, pinned) if i == mi else stationary[i]
                  for i in range(len(configs))]
        run = solve(graphs, state.cell, goal_cell, topology=topology, policy=policy, k=k,
                    max_delay=max_delay, seed=seed, tracing=tracing,
                    blocked_edges=state.forbidden, blocked_nodes=state.path[:-1])
        result.searches += 1
        result.expansions += run.total_expansions
        result.messages += run.messages
        if tracing:
            for rec in trace_records(run):
                rec["iteration"] = it
                trace.append(rec)

        path = run.path
        if path is not None and len(path) > 1 and path.vertices[1].depth != 0:
            # the answer leans on g values inherited through a coarse vertex that
            # surgery has since removed; plan this step on the merged graph
            merged = merge_graphs(graphs)
            path = astar(merged, state.cell, merged.containing(goal_cell),
                         gap_heuristic(goal_cell, lam2),
                         blocked_nodes=state.path[:-1], blocked_edges=state.forbidden)
            result.repairs += 1
        if path is None:
            if len(state.path) == 1:
                trace.append({"iteration": it, "event": "no-path", "vertex": str(state.cell)})
                return result
            v = state.path.pop()
            u = state.path[-1]
            state.forbidden.add((u, v))
            state.backtracks += 1
            state.position = _cell_center(u)
            trace.append({"iteration": it, "event": "backtrack", "vertex": str(v), "to": str(u)})
            continue

        steps = []
        for v in path.vertices[1:]:
            if v.depth != 0:
                break
            steps.append(v)
        if not steps:
            raise RuntimeError(f"search from {state.cell} made no unit-resolution progress")
        state.path.extend(steps)
        state.position = _cell_center(state.cell)
        trace.append({"iteration": it, "event": "advance", "vertex": str(state.cell),
                      "steps": len(steps)})

    cost = sum(unit.node_cost(v) for v in state.path[1:])
    result.path = Path(tuple(state.path), cost)
    return result


def path_is_feasible(tree: Tree, path: Path) -> bool:
    """Unit cells only, consecutive cells share a face or edge, no lethal cell entered."""
    vs = path.vertices
    if any(v.depth != 0 for v in vs):
        return False
    if any(tree.is_lethal(v) for v in vs[1:]):
        return False
    return all(neighbors(a, b) for a, b in zip(vs, vs[1:])) and math.isfinite(path.cost)
