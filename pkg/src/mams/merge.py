"""Fine/coarse vertex semantics, the merged graph, and a plain A* baseline."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .abstraction import MultiResGraph
from .world import Node, ancestor, strictly_contains


@dataclass(frozen=True)
class Path:
    vertices: tuple
    cost: float

    def __len__(self) -> int:
        return len(self.vertices)


def is_fine(v: Node, vertex_set: Iterable[Node]) -> bool:
    return not any(strictly_contains(v, u) for u in vertex_set)


def fine_vertices(vertex_set: Iterable[Node], depth: int) -> set:
    union = set(vertex_set)
    covered = set()
    for u in union:
        for k in range(u.depth + 1, depth + 1):
            covered.add(ancestor(u, k))
    return union - covered


class MergedGraph(MultiResGraph):
    """Graph over the fine vertices of the union of several agents' vertices."""


def merge_graphs(graphs: Sequence[MultiResGraph]) -> MergedGraph:
    if not graphs:
        raise ValueError("need at least one graph to merge")
    first = graphs[0]
    union = set()
    for g in graphs:
        union.update(g.vertices)
    fine = sorted(fine_vertices(union, first.tree.depth))
    return MergedGraph(first.tree, first.lambda1, first.lambda2, fine)


def zero_heuristic(v: Node) -> float:
    return 0.0


def gap_heuristic(goal_cell: Node, lambda2: float) -> Callable[[Node], float]:
    """``lambda2`` times the L-inf gap between a vertex region and the goal cell.

    Every move into a vertex of side ``s`` costs at least ``lambda2 * s**d``
    and advances the walk by at most ``s`` along any axis, so this never
    overestimates and is consistent.
    """
    gx = goal_cell.index

    def h(v: Node) -> float:
        side = 1 << v.depth
        gap = 0
        for i, g in zip(v.index, gx):
            lo = i * side
            if g >= lo + side:
                gap = max(gap, g - lo - side)
            elif g < lo:
                gap = max(gap, lo - g - 1)
        return lambda2 * gap

    return h


def astar(graph: MultiResGraph, start: Node, goal: Node,
          heuristic: Callable[[Node], float] | None = None, *,
          expanded: list | None = None, blocked_nodes=(), blocked_edges=()) -> Path | None:
    """Plain A*.  Returns ``None`` when the goal is unreachable.

    OPEN is ordered by f, then larger g, then vertex id.  When ``expanded`` is
    given every popped vertex is appended to it in order.  Blocked vertices
    are never entered and blocked ``(from, to)`` edges never used.
    """
    blocked_nodes = frozenset(blocked_nodes)
    blocked_edges = frozenset(blocked_edges)
    if start not in graph or goal not in graph:
        raise KeyError("start and goal must be vertices of the graph")
    h = heuristic or zero_heuristic
    g = {start: 0.0}
    pred = {start: start}
    closed = set()
    heap = [(h(start), -0.0, start)]
    while heap:
        f, ng, s = heapq.heappop(heap)
        if s in closed or g[s] != -ng:
            continue
        if expanded is not None:
            expanded.append(s)
        if s == goal:
            return Path(tuple(_walk(pred, s)), g[s])
        closed.add(s)
        gs = g[s]
        for t in graph.neighbors(s):
            if t in closed:
                continue
            c = graph.cost(s, t)
            if c == math.inf or t in blocked_nodes or (blocked_edges and (s, t) in blocked_edges):
                continue
            gt = gs + c
            if gt < g.get(t, math.inf):
                g[t] = gt
                pred[t] = s
                heapq.heappush(heap, (gt + h(t), -gt, t))
    return None


def _walk(pred: dict, s: Node) -> list:
    out = [s]
    while pred[s] != s:
        s = pred[s]
        out.append(s)
    out.reverse()
    return out


def path_cost(graph: MultiResGraph, vertices: Sequence[Node]) -> float:
    total = 0.0
    for v, w in zip(vertices, vertices[1:]):
        total += graph.cost(v, w)
    return total
