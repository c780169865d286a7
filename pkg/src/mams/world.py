"""Occupancy/risk maps and the full 2^d-tree built over them.

Nodes are addressed by ``Node(depth, index)`` where ``index`` is the integer
grid position of the node among all nodes of the same depth.  A node at depth
``k`` covers the closed hypercube ``[index * 2^k, (index + 1) * 2^k]`` so the
world is anchored at the origin and unit cell ``(0, ..., 0)`` spans
``[0, 1]^d``.  Keeping everything integral avoids floating point equality
problems when regions are compared.
"""
from __future__ import annotations

import itertools
import os
import re
from dataclasses import dataclass
from typing import BinaryIO, Iterator, NamedTuple, Sequence, Union

import numpy as np

# A cell (or an aggregate node) whose risk is exactly this value is not traversable.
LETHAL = 1.0


class MapError(ValueError):
    """Base class for map ingestion failures."""


class NotPowerOfTwoError(MapError):
    pass


class ValueRangeError(MapError):
    pass


class MalformedMapError(MapError):
    pass


class Node(NamedTuple):
    depth: int
    index: tuple

    def __str__(self) -> str:
        return f"{self.depth}@{','.join(map(str, self.index))}"


@dataclass(frozen=True)
class Hypercube:
    """Closed axis-aligned hypercube ``[lo, lo + side]``."""

    lo: tuple
    side: int

    @property
    def hi(self) -> tuple:
        return tuple(x + self.side for x in self.lo)

    @property
    def center(self) -> tuple:
        half = self.side / 2
        return tuple(x + half for x in self.lo)

    @property
    def volume(self) -> int:
        return self.side ** len(self.lo)

    def contains_point(self, point: Sequence[float]) -> bool:
        return all(lo <= x <= lo + self.side for lo, x in zip(self.lo, point))

    def interior_contains(self, point: Sequence[float]) -> bool:
        return all(lo < x < lo + self.side for lo, x in zip(self.lo, point))

    def intersection_dim(self, other: "Hypercube") -> int:
        """Dimension of the closed intersection, or -1 if it is empty."""
        dim = 0
        for a, b in zip(self.lo, other.lo):
            lo = max(a, b)
            hi = min(a + self.side, b + other.side)
            if lo > hi:
                return -1
            if lo < hi:
                dim += 1
        return dim


@dataclass
class OccupancyMap:
    """Dense risk grid of side ``2**depth`` in ``d`` dimensions."""

    d: int
    depth: int
    cells: np.ndarray

    def __post_init__(self):
        if self.d < 1 or self.depth < 0:
            raise MapError("dimension must be positive and depth non-negative")
        side = 1 << self.depth
        cells = np.asarray(self.cells, dtype=float)
        if cells.size != side ** self.d:
            raise MalformedMapError(
                f"expected {side ** self.d} cells for d={self.d}, depth={self.depth}, got {cells.size}"
            )
        cells = cells.reshape((side,) * self.d)
        if not np.all(np.isfinite(cells)) or cells.min() < 0.0 or cells.max() > 1.0:
            raise ValueRangeError("cell values must lie in [0, 1]")
        self.cells = cells

    @property
    def side(self) -> int:
        return 1 << self.depth

    @classmethod
    def from_array(cls, cells) -> "OccupancyMap":
        cells = np.asarray(cells, dtype=float)
        side = cells.shape[0]
        if any(n != side for n in cells.shape):
            raise MalformedMapError(f"map must be a hypercube, got shape {cells.shape}")
        return cls(cells.ndim, _log2_exact(side), cells)


def _log2_exact(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise NotPowerOfTwoError(f"side length {n} is not a power of two")
    return n.bit_length() - 1


def _read_bytes(source: Union[bytes, str, os.PathLike, BinaryIO]) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def load_map(source, fmt: str | None = None) -> OccupancyMap:
    """Parse a 2-D map from a ``grid-csv`` or binary ``pgm-gray`` stream.

    ``source`` may be raw bytes, a path, or a binary file object.  When
    ``fmt`` is omitted it is inferred from a path's extension.
    """
    if fmt is None:
        if isinstance(source, (str, os.PathLike)):
            fmt = "pgm-gray" if str(source).lower().endswith(".pgm") else "grid-csv"
        else:
            raise MapError("format must be given for non-path sources")
    data = _read_bytes(source)
    if fmt == "grid-csv":
        return _parse_csv(data)
    if fmt == "pgm-gray":
        return _parse_pgm(data)
    raise MapError(f"unknown map format {fmt!r}")


def _parse_csv(data: bytes) -> OccupancyMap:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedMapError("grid-csv must be ASCII") from exc
    rows = [r.strip() for r in re.split(r"[\n;]", text) if r.strip()]
    if not rows:
        raise MalformedMapError("empty grid-csv stream")
    try:
        grid = [[float(tok) for tok in row.split(",")] for row in rows]
    except ValueError as exc:
        raise MalformedMapError(f"unparseable value: {exc}") from exc
    n = len(grid)
    if any(len(row) != n for row in grid):
        raise MalformedMapError("grid-csv rows and columns must all have the same length")
    _log2_exact(n)
    cells = np.array(grid, dtype=float)
    if not np.all(np.isfinite(cells)) or cells.min() < 0.0 or cells.max() > 1.0:
        raise ValueRangeError("grid-csv values must lie in [0, 1]")
    return OccupancyMap.from_array(cells)


_PGM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def _parse_pgm(data: bytes) -> OccupancyMap:
    pos = 0
    header = []
    for _ in range(4):
        match = _PGM_TOKEN.match(data, pos)
        if match is None:
            raise MalformedMapError("truncated PGM header")
        header.append(match.group(1))
        pos = match.end()
    if header[0] != b"P5":
        raise MalformedMapError("only binary P5 PGM is supported")
    try:
        width, height, maxval = (int(tok) for tok in header[1:])
    except ValueError as exc:
        raise MalformedMapError("non-integer PGM header field") from exc
    if width != height:
        raise MalformedMapError(f"PGM must be square, got {width}x{height}")
    _log2_exact(width)
    if not 0 < maxval < 65536:
        raise MalformedMapError(f"invalid PGM maxval {maxval}")
    pos += 1  # single whitespace byte before the raster
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raster = data[pos:pos + width * height * dtype.itemsize]
    if len(raster) != width * height * dtype.itemsize:
        raise MalformedMapError("truncated PGM raster")
    gray = np.frombuffer(raster, dtype=dtype).astype(float).reshape(height, width)
    if gray.max() > maxval:
        raise ValueRangeError("PGM gray level exceeds maxval")
    return OccupancyMap.from_array(gray / maxval)


def dump_csv(omap: OccupancyMap) -> bytes:
    if omap.d != 2:
        raise MapError("grid-csv holds 2-D maps only")
    lines = (",".join(repr(float(v)) for v in row) for row in omap.cells)
    return ("\n".join(lines) + "\n").encode("ascii")


def dump_pgm(omap: OccupancyMap, maxval: int = 255) -> bytes:
    if omap.d != 2:
        raise MapError("PGM holds 2-D maps only")
    gray = np.rint(omap.cells * maxval).astype(">u2" if maxval > 255 else "u1")
    header = f"P5\n{omap.side} {omap.side}\n{maxval}\n".encode("ascii")
    return header + gray.tobytes()


class Tree:
    """Full 2^d-tree over an occupancy map.

    ``levels[k]`` holds the values of every depth-``k`` node as an array of
    shape ``(2^(depth-k),) * d``; internal values are the mean of their
    children, which makes them equal to the flat average over covered cells.
    """

    def __init__(self, omap: OccupancyMap):
        self.d = omap.d
        self.depth = omap.depth
        self.levels = [np.array(omap.cells, dtype=float)]
        for _ in range(self.depth):
            prev = self.levels[-1]
            half = prev.shape[0] // 2
            blocks = prev.reshape(sum(((half, 2) for _ in range(self.d)), ()))
            self.levels.append(blocks.mean(axis=tuple(range(1, 2 * self.d, 2))))
        self._values = [lvl.tolist() for lvl in self.levels]
        self.levels = tuple(self.levels)
        for lvl in self.levels:
            lvl.setflags(write=False)

    @property
    def side(self) -> int:
        return 1 << self.depth

    @property
    def root(self) -> Node:
        return Node(self.depth, (0,) * self.d)

    def value(self, node: Node) -> float:
        v = self._values[node.depth]
        for i in node.index:
            v = v[i]
        return v

    def is_lethal(self, node: Node) -> bool:
        return self.value(node) >= LETHAL

    def children(self, node: Node) -> list:
        if node.depth == 0:
            return []
        base = tuple(2 * i for i in node.index)
        return [
            Node(node.depth - 1, tuple(b + o for b, o in zip(base, offs)))
            for offs in itertools.product((0, 1), repeat=self.d)
        ]

    def parent(self, node: Node) -> Node | None:
        if node.depth >= self.depth:
            return None
        return Node(node.depth + 1, tuple(i >> 1 for i in node.index))

    def center(self, node: Node) -> tuple:
        side = 1 << node.depth
        return tuple((i + 0.5) * side for i in node.index)

    def nodes(self, depth: int | None = None) -> Iterator[Node]:
        depths = range(self.depth + 1) if depth is None else (depth,)
        for k in depths:
            n = 1 << (self.depth - k)
            for idx in itertools.product(range(n), repeat=self.d):
                yield Node(k, idx)

    def leaf_at(self, point: Sequence[float]) -> Node:
        """Unit cell containing ``point``; boundary points go to the lowest cell."""
        idx = []
        for x in point:
            if not 0 <= x <= self.side:
                raise ValueError(f"point {tuple(point)} lies outside the world")
            i = int(np.ceil(x)) - 1 if x > 0 else 0
            idx.append(i)
        return Node(0, tuple(idx))

    def unit_cost_grid(self, lambda1: float, lambda2: float) -> np.ndarray:
        return lambda1 * self.levels[0] + lambda2


def build_tree(omap: OccupancyMap) -> Tree:
    return Tree(omap)


def region(node: Node) -> Hypercube:
    side = 1 << node.depth
    return Hypercube(tuple(i * side for i in node.index), side)


def ancestor(node: Node, depth: int) -> Node:
    shift = depth - node.depth
    return Node(depth, tuple(i >> shift for i in node.index))


def contains(outer: Node, inner: Node) -> bool:
    """True when ``H(inner)`` is a subset of ``H(outer)`` (equality allowed)."""
    if inner.depth > outer.depth:
        return False
    shift = outer.depth - inner.depth
    return all((i >> shift) == o for i, o in zip(inner.index, outer.index))


def strictly_contains(outer: Node, inner: Node) -> bool:
    return inner.depth < outer.depth and contains(outer, inner)


def center_key(node: Node) -> tuple:
    """Integer key ordering nodes by their centers lexicographically."""
    return tuple(((2 * i + 1) << node.depth) for i in node.index)


def parse_node(text: str) -> Node:
    try:
        depth, rest = text.split("@")
        return Node(int(depth), tuple(int(t) for t in rest.split(",")))
    except ValueError as exc:
        raise MalformedMapError(f"bad node id {text!r}") from exc
