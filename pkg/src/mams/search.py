"""MAMS-A* agent: message processing, expansion, adoption and publishing.

Each agent searches its own multi-resolution graph and broadcasts every
vertex it expands as ``<vertex, g, h>`` plus the sender's predecessor.
Received vertices either refresh a known vertex, replace a coarser local
vertex (graph surgery), get dropped because local knowledge is finer, or are
spliced in where the graph has a hole.

Before searching, agents exchange their start vertices so every agent roots
its search at the finest start available; otherwise a coarse start region
would hand out free cost-to-come to everything on its boundary.

Ahead of the start vertex each agent also announces its impassable vertices.
A coarse vertex is never cheaper than a walk through the finer cells it
covers as long as every cell is passable, which is what keeps the merged
search exact.  A lethal cell breaks that: the coarse vertex stays finite
while its fine cover is cut, and the owner of the fine cells never expands
them, so nobody would ever refute the coarse shortcut.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable

from .abstraction import MultiResGraph
from .merge import Path, gap_heuristic
from .world import Node, contains

INF = math.inf


class MessageError(ValueError):
    pass


@dataclass(frozen=True)
class VertexMessage:
    vertex: Node
    g: float
    h: float
    sender: int
    pred: Node
    kind: str = "expand"  # "start" and "lethal" for the opening announcements


class AgentState:
    """Search state of one agent.

    ``strict_adopt`` resolves the sender's predecessor by exact vertex match
    only; by default a vertex that contains, or is contained in, the
    predecessor region also counts.
    """

    def __init__(self, agent_id: int, graph: MultiResGraph, start_cell: Node, goal_cell: Node,
                 heuristic: Callable[[Node], float] | None = None, *, peers: int = 0,
                 strict_adopt: bool = False, blocked_edges: Iterable = (),
                 blocked_nodes: Iterable = (), tracing: bool = True):
        self.id = agent_id
        self.graph = graph
        self.goal_cell = goal_cell
        self.heuristic = heuristic or gap_heuristic(goal_cell, graph.lambda2)
        self.strict_adopt = strict_adopt
        self.blocked_edges = frozenset(blocked_edges)
        self.blocked_nodes = frozenset(blocked_nodes)
        self.g: dict = {}
        self.h: dict = {}
        self.pred: dict = {}
        self.open: list = []
        self.closed: set = set()
        # goal vertices expanded at their current g; they are not kept in CLOSED
        self.goal_done: set = set()
        self.goal_vertex: Node | None = None
        self.goal_g = INF
        self.active = True
        self.waiting = peers
        self.expansions = 0
        self.tracing = tracing
        self.events: list = []

        start = graph.containing(start_cell)
        if start is None:
            raise ValueError(f"agent {agent_id}: start cell {start_cell} is not covered")
        self.start = start
        self.g[start] = 0.0
        self.h[start] = self.heuristic(start)
        self.pred[start] = start
        self._push(start)

    # -- bookkeeping -----------------------------------------------------

    def _push(self, v: Node) -> None:
        g = self.g[v]
        heapq.heappush(self.open, (g + self.h[v], -g, v))

    def _h(self, v: Node) -> float:
        h = self.h.get(v)
        if h is None:
            h = self.h[v] = self.heuristic(v)
        return h

    def f(self, v: Node) -> float:
        return self.g.get(v, INF) + self._h(v)

    def is_goal(self, v: Node) -> bool:
        return contains(v, self.goal_cell)

    def expanded(self, v: Node) -> bool:
        return v in self.closed or v in self.goal_done

    def open_vertices(self) -> set:
        """Vertices with a live OPEN entry."""
        out = set()
        for f, ng, v in self.open:
            if self._live(ng, v):
                out.add(v)
        return out

    def _live(self, ng: float, v: Node) -> bool:
        return (v in self.graph and v not in self.closed and v not in self.goal_done
                and self.g.get(v) == -ng)

    def pop_open(self) -> Node | None:
        while self.open:
            f, ng, v = heapq.heappop(self.open)
            if self._live(ng, v):
                return v
        return None

    def _emit(self, event: str, v: Node | None, **extra) -> None:
        if not self.tracing:
            return
        if v is None:
            self.events.append((event, None, None, None, None, extra))
        else:
            g = self.g.get(v, INF)
            h = self.h.get(v, 0.0)
            self.events.append((event, v, g, h, g + h, extra))

    # -- protocol ----------------------------------------------------------

    def announce(self) -> VertexMessage:
        s = self.start
        return VertexMessage(s, 0.0, self.h[s], self.id, s, kind="start")

    def lethal_announcements(self) -> list:
        graph = self.graph
        return [VertexMessage(v, INF, 0.0, self.id, v, kind="lethal")
                for v in sorted(graph.vertices) if graph.node_cost(v) == INF]

    def step(self, inbox: Iterable[VertexMessage]) -> list:
        """Process the inbox, then expand and publish one vertex if active."""
        for msg in inbox:
            self.process_message(msg)
        if self.waiting > 0 or not self.active:
            return []
        s = self.pop_open()
        if s is None:
            self._inactivate(None)
            return []
        self.expand(s)
        return [self.publish(s)]

    def publish(self, s: Node) -> VertexMessage:
        if self.tracing:
            self._emit("publish", s)
        return VertexMessage(s, self.g[s], self.h[s], self.id, self.pred[s])

    def process_message(self, msg: VertexMessage) -> None:
        s = msg.vertex
        graph = self.graph
        known = s in graph
        if (known and not self.tracing and msg.kind == "expand"
                and (s in self.closed or s in self.goal_done) and self.g[s] <= msg.g):
            return  # nothing new: the common case once agents overlap
        if not known:
            tree = graph.tree
            if (len(s.index) != tree.d or not 0 <= s.depth <= tree.depth
                    or not all(0 <= i < (tree.side >> s.depth) for i in s.index)):
                raise MessageError(f"agent {self.id}: malformed vertex {s!r} from agent {msg.sender}")
        if self.tracing:
            self._emit("deliver", s, sender=msg.sender)
        if msg.kind == "lethal":
            self._cut(s)
        elif known:
            if not self.expanded(s) or self.g.get(s, INF) > msg.g:
                self.adopt(msg)
        elif graph.has_inside(s):
            pass  # local knowledge is finer
        else:
            coarse = graph.containing(s)
            graph.add_vertex(s)
            if coarse is not None:
                graph.remove_vertex(coarse)
                self._forget(coarse)
                self._emit("surgery", s, removed=str(coarse))
            self.adopt(msg)
        if msg.kind == "start" and self.waiting > 0:
            self.waiting -= 1

    def _cut(self, s: Node) -> None:
        """Structural update only: a lethal vertex replaces whatever covers it."""
        graph = self.graph
        if s in graph or graph.has_inside(s):
            return
        coarse = graph.containing(s)
        graph.add_vertex(s)
        if coarse is not None:
            graph.remove_vertex(coarse)
            self._forget(coarse)
            self._emit("surgery", s, removed=str(coarse))

    def _forget(self, v: Node) -> None:
        self.closed.discard(v)
        self.goal_done.discard(v)
        self.g.pop(v, None)
        self.h.pop(v, None)
        self.pred.pop(v, None)
        if self.goal_vertex == v:
            self.goal_vertex = None
            self.goal_g = INF
        if self.start == v:
            self.start = None

    def _resolvable(self, p: Node) -> bool:
        graph = self.graph
        if p in graph:
            return True
        if self.strict_adopt:
            return False
        return graph.containing(p) is not None or graph.has_inside(p)

    def adopt(self, msg: VertexMessage) -> bool:
        s = msg.vertex
        if not self._resolvable(msg.pred):
            return False
        self.h[s] = max(self._h(s), msg.h)
        if msg.g >= self.g.get(s, INF):
            return False
        self.g[s] = msg.g
        self.pred[s] = msg.pred
        if msg.pred == s:
            self.start = s
        self.closed.discard(s)
        self.goal_done.discard(s)
        self._push(s)
        self._emit("adopt", s, sender=msg.sender)
        if not self.active:
            self.active = True
            self._emit("reactivate", s)
        return True

    def expand(self, s: Node) -> None:
        self.expansions += 1
        self._emit("expand", s)
        if self.is_goal(s):
            self.goal_done.add(s)
            self.goal_vertex = s
            self.goal_g = self.g[s]
            self._inactivate(s)
            return
        self.closed.add(s)
        graph = self.graph
        gs = self.g[s]
        blocked_edges = self.blocked_edges
        blocked_nodes = self.blocked_nodes
        closed = self.closed
        for t in graph.neighbors(s):
            c = graph.node_cost(t)
            if c == INF or t in blocked_nodes or (blocked_edges and (s, t) in blocked_edges):
                continue
            gt = gs + c
            if gt < self.g.get(t, INF):
                # under message delay a closed vertex may still carry a stale g
                self.g[t] = gt
                self._h(t)
                self.pred[t] = s
                closed.discard(t)
                self.goal_done.discard(t)
                self._push(t)

    def _inactivate(self, s: Node | None) -> None:
        self.active = False
        self._emit("inactivate", s)

    def result(self) -> tuple:
        """``(goal vertex, cost)`` of the last goal expansion still valid, or ``(None, inf)``."""
        v = self.goal_vertex
        if v is not None and v in self.goal_done and v in self.graph:
            return v, self.g[v]
        return None, INF


def extract_path(published: Iterable[VertexMessage], goal: Node, cost: float,
                 node_cost: Callable[[Node], float]) -> Path | None:
    """Rebuild the path ending at ``goal`` with total ``cost`` from published records.

    Each record names the sender's predecessor; the predecessor's own record
    must satisfy ``g(pred) + cost(vertex) == g(vertex)`` exactly, which is
    how the relaxation produced it, so hops may cross agents freely.
    """
    by_vertex: dict = {}
    for m in published:
        by_vertex.setdefault(m.vertex, {})[m.g] = m.pred
    if goal not in by_vertex or cost not in by_vertex[goal]:
        return None
    out = [goal]
    v, gv = goal, cost
    while True:
        p = by_vertex[v][gv]
        if p == v:
            if gv != 0.0:
                return None
            break
        cv = node_cost(v)
        match = None
        for gp in by_vertex.get(p, ()):
            if gp + cv == gv:
                match = gp
                break
        if match is None:
            return None
        out.append(p)
        v, gv = p, match
    out.reverse()
    return Path(tuple(out), cost)
