"""Per-agent multi-resolution graphs cut from the world tree."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .world import Node, Tree, center_key, contains, region

DEFAULT_LAMBDA1 = 0.999
DEFAULT_LAMBDA2 = 0.001

# slack on the refinement inequality; near-ties refine rather than keep
EQ1_TOL = 1e-9


@dataclass(frozen=True)
class AgentConfig:
    id: int
    position: tuple
    alpha: float
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        for name in ("lambda1", "lambda2"):
            lam = getattr(self, name)
            if not 0 < lam <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {lam}")
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))

    def check_inside(self, tree: Tree) -> None:
        if len(self.position) != tree.d or not all(0 <= x <= tree.side for x in self.position):
            raise ValueError(f"agent {self.id} position {self.position} lies outside the world")


def keeps_node(tree: Tree, node: Node, position: Sequence[float], alpha: float) -> bool:
    """Distance rule: a node stays whole when it is far enough from the agent."""
    dist = math.dist(tree.center(node), position)
    return dist - math.sqrt(tree.d) - alpha * (1 << node.depth) > EQ1_TOL


def neighbors(u: Node, v: Node) -> bool:
    """Closed regions meet in more than a single point."""
    return region(u).intersection_dim(region(v)) >= 1


def edge_cost(tree: Tree, v: Node, w: Node, lambda1: float, lambda2: float) -> float:
    """Cost of moving from ``v`` into ``w``; only the destination matters."""
    return (1 << (tree.d * w.depth)) * (lambda1 * tree.value(w) + lambda2)


class MultiResGraph:
    """Vertex set with geometric adjacency, mutable by its owner.

    Vertex regions must have pairwise disjoint interiors.  Holes are allowed
    (they appear after graph surgery during search).  Edge costs are derived
    from the destination vertex on demand; vertices whose risk is lethal have
    no incoming edges.
    """

    def __init__(self, tree: Tree, lambda1: float = DEFAULT_LAMBDA1,
                 lambda2: float = DEFAULT_LAMBDA2, vertices: Iterable[Node] = ()):
        self.tree = tree
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self._adj: dict[Node, set] = {}
        # number of vertices strictly inside each tree node
        self._inside: dict[Node, int] = {}
        self._cost: dict[Node, float] = {}
        # unit cell -> id of the vertex covering it, -1 for holes
        self._owner = np.full((tree.side,) * tree.d, -1, dtype=np.int32)
        self._ids: dict[Node, int] = {}
        self._nodes: list = []
        for v in vertices:
            self._insert(v)
        self._connect_all()

    def __contains__(self, v) -> bool:
        return v in self._adj

    def __len__(self) -> int:
        return len(self._adj)

    def __iter__(self) -> Iterator[Node]:
        return iter(self._adj)

    @property
    def vertices(self):
        return self._adj.keys()

    def copy(self) -> "MultiResGraph":
        g = MultiResGraph.__new__(MultiResGraph)
        g.tree, g.lambda1, g.lambda2 = self.tree, self.lambda1, self.lambda2
        g._adj = {v: set(nb) for v, nb in self._adj.items()}
        g._inside = dict(self._inside)
        g._cost = dict(self._cost)
        g._owner = self._owner.copy()
        g._ids = dict(self._ids)
        g._nodes = list(self._nodes)
        return g

    def neighbors(self, v: Node) -> set:
        return self._adj[v]

    def node_cost(self, w: Node) -> float:
        c = self._cost.get(w)
        if c is None:
            if self.tree.is_lethal(w):
                c = math.inf
            else:
                c = edge_cost(self.tree, w, w, self.lambda1, self.lambda2)
            self._cost[w] = c
        return c

    def cost(self, v: Node, w: Node) -> float:
        return self.node_cost(w)

    def edges(self) -> Iterator[tuple]:
        """Directed ``(v, w, cost)`` triples for every traversable neighbor pair."""
        for v, nbrs in self._adj.items():
            for w in nbrs:
                c = self.node_cost(w)
                if c != math.inf:
                    yield v, w, c

    def containing(self, cell: Node) -> Node | None:
        """Vertex whose region contains ``cell`` (an arbitrary tree node)."""
        depth, index = cell
        if depth:
            index = tuple(i << depth for i in index)
        j = self._owner[index]
        if j < 0:
            return None
        w = self._nodes[j]
        if w[0] < depth:
            return None
        if depth and w[0] == depth:
            return w if w == cell else None
        return w if depth == 0 or contains(w, cell) else None

    def has_inside(self, node: Node) -> bool:
        """Some vertex lies strictly inside ``node``."""
        return self._inside.get(node, 0) > 0

    def add_vertex(self, v: Node) -> None:
        if v in self._adj:
            return
        self._insert(v)
        self._connect(v)

    def remove_vertex(self, v: Node) -> None:
        for w in self._adj.pop(v):
            self._adj[w].discard(v)
        inside = self._inside
        for a in _ancestors(self.tree, v):
            n = inside[a] - 1
            if n:
                inside[a] = n
            else:
                del inside[a]
        view = self._owner[_box(v)]
        view[view == self._ids.pop(v)] = -1

    def _insert(self, v: Node) -> None:
        self._adj[v] = set()
        inside = self._inside
        for a in _ancestors(self.tree, v):
            inside[a] = inside.get(a, 0) + 1
        # the box is either a hole or lies inside one coarser vertex, which
        # the caller removes next
        j = len(self._nodes)
        self._nodes.append(v)
        self._ids[v] = j
        self._owner[_box(v)] = j

    def _connect_all(self) -> None:
        """Adjacency of a fresh tiling from shifted copies of the owner grid."""
        owner = self._owner
        d = owner.ndim
        pairs = []
        for off in _contact_offsets(d):
            a = owner[tuple(slice(max(0, -o), owner.shape[i] - max(0, o)) for i, o in enumerate(off))]
            b = owner[tuple(slice(max(0, o), owner.shape[i] - max(0, -o)) for i, o in enumerate(off))]
            mask = (a != b) & (a >= 0) & (b >= 0)
            if mask.any():
                pairs.append(a[mask].astype(np.int64) * len(self._nodes) + b[mask])
        if not pairs:
            return
        nodes = self._nodes
        adj = self._adj
        n = len(nodes)
        for key in np.unique(np.concatenate(pairs)).tolist():
            v, w = nodes[key // n], nodes[key % n]
            adj[v].add(w)
            adj[w].add(v)

    def _connect(self, v: Node) -> None:
        nbrs = self._adj[v]
        adj = self._adj
        owner = self._owner
        found = set()
        for box in _shell(self.tree, v):
            found.update(owner[box].ravel().tolist())
        found.discard(-1)
        found.discard(self._ids[v])
        nodes = self._nodes
        for j in found:
            w = nodes[j]
            if w not in nbrs:
                nbrs.add(w)
                adj[w].add(v)


# Geometry below depends only on the tree shape, so it is cached per tree and
# shared by every graph and agent built over it.

def _box(v: Node) -> tuple:
    side = 1 << v.depth
    return tuple(slice(i * side, (i + 1) * side) for i in v.index)


def _cache(tree: Tree, name: str) -> dict:
    try:
        return tree.__dict__[name]
    except KeyError:
        return tree.__dict__.setdefault(name, {})


def _contact_offsets(d: int) -> list:
    """Unit-cell offsets, one per +/- pair, whose cells meet in dimension >= 1."""
    out = []
    for off in itertools.product((-1, 0, 1), repeat=d):
        nz = [o for o in off if o]
        if 0 < len(nz) < d or (d == 1 and nz):
            if nz[0] > 0:
                out.append(off)
    return out


def _ancestors(tree: Tree, v: Node) -> list:
    cache = _cache(tree, "_ancestor_cache")
    out = cache.get(v)
    if out is None:
        idx = v.index
        out = cache[v] = [Node(k, tuple(i >> (k - v.depth) for i in idx))
                          for k in range(v.depth + 1, tree.depth + 1)]
    return out


def _shell(tree: Tree, v: Node) -> list:
    """Slabs of unit cells outside ``v`` that touch it along a face or edge."""
    cache = _cache(tree, "_shell_cache")
    out = cache.get(v)
    if out is not None:
        return out
    side = 1 << v.depth
    n = tree.side
    options = []
    for i in v.index:
        lo = i * side
        opts = [(slice(lo, lo + side), True)]
        if lo > 0:
            opts.append((slice(lo - 1, lo), False))
        if lo + side < n:
            opts.append((slice(lo + side, lo + side + 1), False))
        options.append(opts)
    d = len(options)
    out = []
    for combo in itertools.product(*options):
        inside = sum(1 for _, flag in combo if flag)
        if 0 < inside < d:
            out.append(tuple(sl for sl, _ in combo))
    cache[v] = out
    return out


def select_vertices(tree: Tree, config: AgentConfig, pinned: Iterable[Node] = ()) -> list:
    """Top-down cut of the tree; nodes covering a ``pinned`` cell are always split."""
    split = set()
    for cell in pinned:
        split.update(_ancestors(tree, cell))
    out = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.depth == 0 or (node not in split
                               and keeps_node(tree, node, config.position, config.alpha)):
            out.append(node)
        else:
            stack.extend(reversed(tree.children(node)))
    return out


def build_abstraction(tree: Tree, config: AgentConfig, pinned: Iterable[Node] = ()) -> MultiResGraph:
    config.check_inside(tree)
    return MultiResGraph(tree, config.lambda1, config.lambda2,
                         select_vertices(tree, config, pinned))


def full_resolution_graph(tree: Tree, lambda1: float = DEFAULT_LAMBDA1,
                          lambda2: float = DEFAULT_LAMBDA2) -> MultiResGraph:
    return MultiResGraph(tree, lambda1, lambda2, tree.nodes(0))


def locate_vertex(graph: MultiResGraph, point: Sequence[float]) -> Node | None:
    """Vertex containing ``point``; on shared boundaries the lowest center wins."""
    tree = graph.tree
    per_axis = []
    for x in point:
        if not 0 <= x <= tree.side:
            raise ValueError(f"point {tuple(point)} lies outside the world")
        f = math.floor(x)
        if f == x:
            per_axis.append([i for i in (f - 1, f) if 0 <= i < tree.side])
        else:
            per_axis.append([f])
    found = {graph.containing(Node(0, idx)) for idx in itertools.product(*per_axis)}
    found.discard(None)
    if not found:
        return None
    return min(found, key=center_key)
