"""Deterministic SVG pictures of maps, abstractions, merges and search traces.

Only planar worlds are drawn.  Screen x follows index axis 1 and screen y
follows axis 0, so a picture has the same orientation as the PGM the map
came from.  Risk is shown as gray ``255 * (1 - V)``: free space is white and
lethal space is black.
"""
from __future__ import annotations

import json
from typing import Iterable, Sequence

from .merge import fine_vertices
from .world import Node, Tree, parse_node, region

PATH_COLOR = "#2ca02c"
START_COLOR = "#7b2cbf"
GOAL_COLOR = "#d62728"
COARSE_COLOR = "#1f77b4"
FINE_COLOR = "#2ca02c"
OUTLINE = "#555555"


class RenderError(ValueError):
    pass


def _n(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def gray(value: float) -> str:
    level = max(0, min(255, round(255 * (1.0 - value))))
    return f"#{level:02x}{level:02x}{level:02x}"


def _check_planar(tree: Tree) -> None:
    if tree.d != 2:
        raise RenderError(f"only planar maps can be drawn, got d={tree.d}")


def _rect(v: Node, scale: float, ox: float, oy: float, **attrs) -> str:
    box = region(v)
    y, x = box.lo
    parts = [f'<rect x="{_n(ox + x * scale)}" y="{_n(oy + y * scale)}" '
             f'width="{_n(box.side * scale)}" height="{_n(box.side * scale)}"']
    for k, val in attrs.items():
        parts.append(f' {k.replace("_", "-")}="{val}"')
    parts.append("/>")
    return "".join(parts)


def _point(p: Sequence[float], scale: float, ox: float, oy: float) -> tuple:
    return ox + p[1] * scale, oy + p[0] * scale


def _center(v: Node) -> tuple:
    box = region(v)
    return tuple(lo + box.side / 2 for lo in box.lo)


class Panel:
    """One square drawing area of ``size`` pixels at offset ``(ox, oy)``."""

    def __init__(self, tree: Tree, size: float, ox: float = 0.0, oy: float = 0.0):
        _check_planar(tree)
        self.tree = tree
        self.size = size
        self.ox = ox
        self.oy = oy
        self.scale = size / tree.side
        self.items: list = []

    def frame(self) -> None:
        self.items.append(f'<rect x="{_n(self.ox)}" y="{_n(self.oy)}" width="{_n(self.size)}" '
                          f'height="{_n(self.size)}" fill="white" stroke="black" '
                          f'stroke-width="1"/>')

    def cells(self) -> None:
        """The raw map at unit resolution, without outlines."""
        for v in self.tree.nodes(0):
            self.items.append(_rect(v, self.scale, self.ox, self.oy,
                                    fill=gray(self.tree.value(v)), stroke="none"))

    def vertices(self, vs: Iterable[Node], filled: bool = True, outline: bool = True) -> None:
        for v in sorted(vs):
            attrs = {"fill": gray(self.tree.value(v)) if filled else "none"}
            if outline:
                attrs.update(stroke=OUTLINE, stroke_width="0.5")
            else:
                attrs.update(stroke="none")
            self.items.append(_rect(v, self.scale, self.ox, self.oy, **attrs))

    def shaded(self, vs: Iterable[Node], fill: str, opacity: float = 0.6) -> None:
        for v in sorted(vs):
            self.items.append(_rect(v, self.scale, self.ox, self.oy, fill=fill,
                                    fill_opacity=_n(opacity), stroke=OUTLINE,
                                    stroke_width="0.5"))

    def path(self, vs: Sequence[Node]) -> None:
        if len(vs) < 2:
            return
        pts = " ".join(f"{_n(x)},{_n(y)}" for x, y in
                       (_point(_center(v), self.scale, self.ox, self.oy) for v in vs))
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{PATH_COLOR}" '
                          f'stroke-width="2" stroke-linejoin="round"/>')

    def marker(self, p: Sequence[float], color: str, r: float = 4.0) -> None:
        x, y = _point(p, self.scale, self.ox, self.oy)
        self.items.append(f'<circle cx="{_n(x)}" cy="{_n(y)}" r="{_n(r)}" fill="{color}"/>')

    def label(self, text: str) -> None:
        self.items.append(f'<text x="{_n(self.ox + self.size / 2)}" '
                          f'y="{_n(self.oy + self.size + 16)}" text-anchor="middle" '
                          f'font-family="sans-serif" font-size="13">{text}</text>')


def _document(width: float, height: float, body: list, defs: str = "") -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(width)}" '
            f'height="{_n(height)}" viewBox="0 0 {_n(width)} {_n(height)}">')
    lines = [head]
    if defs:
        lines.append(f"<defs>{defs}</defs>")
    lines.extend(body)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_svg(tree: Tree, vertices: Iterable[Node] | None = None, *,
               path: Sequence[Node] | None = None, start: Sequence[float] | None = None,
               goal: Sequence[float] | None = None, size: float = 512.0) -> str:
    """A single picture of ``vertices`` (every unit cell when omitted).

    Parts of the world covered by no listed vertex stay blank.
    """
    panel = Panel(tree, size, 1.0, 1.0)
    panel.frame()
    if vertices is None:
        vertices = tree.nodes(0)
    panel.vertices(vertices)
    if path:
        panel.path(path)
    if goal is not None:
        panel.marker(goal, GOAL_COLOR)
    if start is not None:
        panel.marker(start, START_COLOR)
    return _document(size + 2, size + 2, panel.items)


_HATCH = (f'<pattern id="hatch" patternUnits="userSpaceOnUse" width="6" height="6" '
          f'patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" stroke="{COARSE_COLOR}" stroke-width="2"/>'
          f'</pattern>')


def merge_figure(tree: Tree, graphs: Sequence, positions: Sequence | None = None, *,
                 path: Sequence[Node] | None = None, size: float = 240.0) -> str:
    """Five panels: (a) the world, (b) and (c) the first two abstractions,
    (d) their union with coarse vertices hatched blue and fine vertices solid
    green, (e) the merged graph."""
    if len(graphs) < 2:
        raise RenderError("a merge figure needs at least two graphs")
    gap = 20.0
    union = set()
    for g in graphs:
        union.update(g.vertices)
    fine = fine_vertices(union, tree.depth)
    coarse = union - fine
    panels = []
    for i in range(5):
        p = Panel(tree, size, gap / 2 + i * (size + gap), gap / 2)
        p.frame()
        panels.append(p)
    a, b, c, d, e = panels
    a.cells()
    a.label("(a) world")
    for p, g, name in ((b, graphs[0], "(b) G1"), (c, graphs[1], "(c) G2")):
        p.vertices(g.vertices)
        p.label(name)
    # fine vertices tile every coarse one, so the hatching goes on top
    d.shaded(fine, FINE_COLOR)
    for v in sorted(coarse, key=lambda v: (-v.depth, v)):
        d.items.append(_rect(v, d.scale, d.ox, d.oy, fill="url(#hatch)", stroke=COARSE_COLOR,
                             stroke_width="1"))
    d.label("(d) union")
    e.vertices(fine)
    e.label("(e) merged")
    if path:
        e.path(path)
    if positions:
        for p, pos in zip((b, c), positions):
            p.marker(pos, START_COLOR)
    items = [item for p in panels for item in p.items]
    return _document(5 * (size + gap), size + gap + 24, items, _HATCH)


# -- traces --------------------------------------------------------------------

def read_trace(lines: Iterable[str]) -> tuple:
    """Split an NDJSON trace into its ``meta`` header and event records."""
    meta: dict = {}
    records = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if "meta" in rec and len(rec) == 1:
            meta = rec["meta"]
        else:
            records.append(rec)
    return meta, records


def communicated(records: Iterable[dict]) -> set:
    """Vertices some agent expanded or published; everything else is left blank."""
    out = set()
    for rec in records:
        if rec.get("event") in ("expand", "publish") and rec.get("vertex"):
            out.add(parse_node(rec["vertex"]))
    return out


def render_trace(tree: Tree, meta: dict, records: Sequence[dict], size: float = 512.0) -> str:
    """Picture of a recorded run: communicated vertices, the path and the start.

    Refinement traces carry unit-cell steps; every cell on the final path is
    drawn even if no search published it.
    """
    path = [parse_node(t) for t in (meta.get("path") or [])]
    # a vertex and a finer one inside it may both have been published; the finer wins
    shown = fine_vertices(communicated(records) | set(path), tree.depth)
    start = meta.get("start")
    goal = meta.get("goal")
    return render_svg(tree, shown, path=path, start=start, goal=goal, size=size)

