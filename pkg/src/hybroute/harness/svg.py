"""Deterministic layered SVG drawings of an instance and a routed path."""
from __future__ import annotations

from typing import Sequence

from ..geometry import C, UdgInstance, cell_center, compute_active_cells
from ..grid import GridGraph
from ..labelling import portal_tree_edges

LAYERS = ("udg", "cells", "grid", "portals", "path")
VIEW = 800.0
PAD = 20.0


class _Frame:
    def __init__(self, udg: UdgInstance):
        xs = [p.x for p in udg.pos.values()] or [0.0]
        ys = [p.y for p in udg.pos.values()] or [0.0]
        self.x0, self.y1 = min(xs) - C, max(ys) + C
        span = max(max(xs) - min(xs), max(ys) - min(ys)) + 2 * C
        self.k = (VIEW - 2 * PAD) / span

    def __call__(self, x: float, y: float) -> str:
        # y grows downward in SVG
        return f"{PAD + (x - self.x0) * self.k:.3f},{PAD + (self.y1 - y) * self.k:.3f}"


def _line(f: _Frame, a, b, cls: str) -> str:
    (x1, y1), (x2, y2) = f(*a).split(","), f(*b).split(",")
    return f'<line class="{cls}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"/>'


def render_svg(udg: UdgInstance, layers: Sequence[str] = (), path: Sequence[int] | None = None) -> str:
    unknown = [l for l in layers if l not in LAYERS]
    if unknown:
        raise ValueError(f"unknown layers: {', '.join(unknown)}")
    if "path" in layers and path is None:
        raise ValueError("the path layer needs a routed path")
    f = _Frame(udg)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{VIEW:.0f}" height="{VIEW:.0f}" '
        f'viewBox="0 0 {VIEW:.0f} {VIEW:.0f}">',
        "<style>.udg{stroke:#999;stroke-width:0.5}.node{fill:#000}.cell{fill:#9cf;fill-opacity:0.4;stroke:none}"
        ".grid{stroke:#f80;stroke-width:1}.portal{stroke:#06c;stroke-width:2}"
        ".path{fill:none;stroke:#d00;stroke-width:2.5}</style>",
    ]
    need_cells = any(l in layers for l in ("cells", "grid", "portals"))
    grid = GridGraph.from_cells(compute_active_cells(udg)) if need_cells else None
    for layer in LAYERS:
        if layer not in layers:
            continue
        out.append(f'<g id="{layer}">')
        if layer == "udg":
            out.extend(_line(f, udg.pos[u], udg.pos[v], "udg") for u, v in udg.edges)
            for u in udg.ids:
                x, y = f(*udg.pos[u]).split(",")
                out.append(f'<circle class="node" cx="{x}" cy="{y}" r="2"/>')
        elif layer == "cells":
            side = C * f.k
            for i, j in sorted(grid.nodes):
                x, y = f(i * C, (j + 1) * C).split(",")
                out.append(f'<rect class="cell" x="{x}" y="{y}" width="{side:.3f}" height="{side:.3f}"/>')
        elif layer == "grid":
            out.extend(_line(f, cell_center(a), cell_center(b), "grid") for a, b in sorted(grid.edges))
        elif layer == "portals":
            out.extend(_line(f, cell_center(a), cell_center(b), "portal") for a, b in portal_tree_edges(grid))
        elif layer == "path":
            pts = " ".join(f(*udg.pos[u]) for u in path)
            out.append(f'<polyline class="path" points="{pts}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
