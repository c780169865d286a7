"""Deterministic generated maps and the copies shipped with the package.

Three families, each at depths 5 to 7: uniform random risk, corridor mazes
with lethal walls, and smooth risk blobs with lethal cores.  Every shipped
map keeps the two corner cells ``(0, 0)`` and ``(side - 1, side - 1)`` free
so they can serve as default start and goal.
"""
from __future__ import annotations

import random
from importlib import resources
from pathlib import Path

import numpy as np

from .world import LETHAL, OccupancyMap, dump_pgm, load_map

KINDS = ("uniform", "corridor", "blob")
DEPTHS = (5, 6, 7)
SEEDS = {"uniform": 11, "corridor": 23, "blob": 37}


def uniform_map(depth: int, seed: int = 0, high: float = 0.95) -> OccupancyMap:
    """Independent per-cell risk drawn from ``[0, high]``; nothing lethal."""
    rng = np.random.default_rng(seed)
    side = 1 << depth
    return OccupancyMap(2, depth, rng.uniform(0.0, high, size=(side, side)))


def corridor_map(depth: int, seed: int = 0, rooms: int = 8) -> OccupancyMap:
    """Perfect maze over a ``rooms x rooms`` lattice.

    Each room is a square block of free space with lethal wall strips on its
    upper sides; carving a passage clears the strip between two rooms.
    Free cells carry a little random risk so costs are not all equal.
    """
    side = 1 << depth
    if side % rooms or side // rooms < 4:
        raise ValueError(f"depth {depth} is too small for {rooms} rooms")
    c = side // rooms
    wall = max(1, c // 4)
    rng = random.Random(seed)
    noise = np.random.default_rng(seed).uniform(0.0, 0.2, size=(side, side))
    cells = np.full((side, side), LETHAL)

    def room(i, j):
        cells[i * c:i * c + c - wall, j * c:j * c + c - wall] = noise[i * c:i * c + c - wall,
                                                                      j * c:j * c + c - wall]

    def carve(a, b):
        (i, j), (p, q) = sorted((a, b))
        if p == i + 1:  # passage along axis 0
            sl = (slice(i * c + c - wall, p * c), slice(j * c, j * c + c - wall))
        else:
            sl = (slice(i * c, i * c + c - wall), slice(j * c + c - wall, q * c))
        cells[sl] = noise[sl]

    seen = {(0, 0)}
    stack = [(0, 0)]
    room(0, 0)
    while stack:
        i, j = stack[-1]
        nxt = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
               if 0 <= i + di < rooms and 0 <= j + dj < rooms and (i + di, j + dj) not in seen]
        if not nxt:
            stack.pop()
            continue
        n = rng.choice(nxt)
        seen.add(n)
        room(*n)
        carve((i, j), n)
        stack.append(n)
    # keep the far corner reachable: its room lost the cell to the wall strip
    goal_room = rooms - 1
    cells[goal_room * c:, goal_room * c:] = noise[goal_room * c:, goal_room * c:]
    return OccupancyMap(2, depth, cells)


def blob_map(depth: int, seed: int = 0, blobs: int | None = None) -> OccupancyMap:
    """Sum of Gaussian bumps clipped to ``[0, 1]``; peak centres are lethal."""
    side = 1 << depth
    rng = np.random.default_rng(seed)
    n = blobs or max(4, side // 4)
    y, x = np.mgrid[0:side, 0:side] + 0.5
    field = np.zeros((side, side))
    for _ in range(n):
        cy, cx = rng.uniform(0, side, size=2)
        r = rng.uniform(side / 32, side / 10)
        field += 1.3 * np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * r * r))
    cells = np.clip(field, 0.0, 1.0)
    return OccupancyMap(2, depth, cells)


GENERATORS = {"uniform": uniform_map, "corridor": corridor_map, "blob": blob_map}


def corners_connected(omap: OccupancyMap) -> bool:
    """Flood fill over non-lethal cells from one corner to the other."""
    free = omap.cells < LETHAL
    side = omap.side
    if not (free[0, 0] and free[-1, -1]):
        return False
    seen = np.zeros_like(free)
    seen[0, 0] = True
    frontier = [(0, 0)]
    while frontier:
        i, j = frontier.pop()
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= a < side and 0 <= b < side and free[a, b] and not seen[a, b]:
                seen[a, b] = True
                frontier.append((a, b))
    return bool(seen[-1, -1])


def generate(kind: str, depth: int, seed: int | None = None) -> OccupancyMap:
    """Map of the given family; the seed is bumped until the corners connect."""
    if kind not in GENERATORS:
        raise ValueError(f"unknown map kind {kind!r}; expected one of {KINDS}")
    seed = SEEDS[kind] if seed is None else seed
    for attempt in range(1000):
        omap = GENERATORS[kind](depth, seed + attempt)
        omap.cells[0, 0] = omap.cells[-1, -1] = 0.0
        if corners_connected(omap):
            return omap
    raise RuntimeError(f"could not generate a connected {kind} map")


def shipped_name(kind: str, depth: int) -> str:
    return f"{kind}-{depth}.pgm"


def shipped_names() -> list:
    return [shipped_name(k, d) for k in KINDS for d in DEPTHS]


def load_shipped(name: str) -> OccupancyMap:
    """Load a packaged map by file name, e.g. ``corridor-7.pgm`` or ``corridor-7``."""
    if not name.endswith(".pgm"):
        name += ".pgm"
    data = resources.files("mams").joinpath("data", name)
    if not data.is_file():
        raise FileNotFoundError(f"no shipped map named {name!r}")
    return load_map(data.read_bytes(), "pgm-gray")


def resolve_map(ref: str) -> OccupancyMap:
    """A path on disk if it exists, otherwise a shipped map name."""
    p = Path(ref)
    if p.is_file():
        return load_map(p)
    return load_shipped(ref)


def write_shipped(outdir) -> list:
    """Regenerate every shipped map into ``outdir``; returns the written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in KINDS:
        for depth in DEPTHS:
            path = outdir / shipped_name(kind, depth)
            path.write_bytes(dump_pgm(generate(kind, depth)))
            written.append(path)
    return written
