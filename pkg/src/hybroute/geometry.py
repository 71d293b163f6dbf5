"""Embedded-point geometry: unit-disk graphs, grid cells and the active-cell map."""
from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

#: Side length of a grid cell.
C = math.sqrt(15) / 10
#: Absolute tolerance used by every geometric predicate.
EPS = 1e-9

Cell = tuple[int, int]
Edge = tuple[int, int]
Triangle = tuple[int, int, int]


class Point(NamedTuple):
    x: float
    y: float


class GeometryError(ValueError):
    pass


class DuplicateId(GeometryError):
    pass


class CoincidentPoints(GeometryError):
    pass


@dataclass(frozen=True)
class UdgInstance:
    ids: tuple[int, ...]
    pos: dict[int, Point]
    adj: dict[int, frozenset[int]]
    edges: tuple[Edge, ...]
    connected: bool

    @property
    def n(self) -> int:
        return len(self.ids)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    def dist(self, u: int, v: int) -> float:
        a, b = self.pos[u], self.pos[v]
        return math.hypot(a.x - b.x, a.y - b.y)


def build_udg(points: Iterable[tuple[int, Sequence[float]]]) -> UdgInstance:
    """Build the unit-disk graph over ``(id, (x, y))`` pairs.

    Connectivity is reported in ``connected``; rejecting a disconnected
    instance is left to the caller.
    """
    pos: dict[int, Point] = {}
    for nid, p in points:
        nid = int(nid)
        if nid < 0:
            raise GeometryError(f"negative id {nid}")
        if nid in pos:
            raise DuplicateId(f"duplicate id {nid}")
        x, y = float(p[0]), float(p[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise GeometryError(f"non-finite point for id {nid}")
        pos[nid] = Point(x, y)
    ids = tuple(sorted(pos))
    if len(set(pos.values())) != len(pos):
        raise CoincidentPoints("two nodes share a point")

    adj: dict[int, set[int]] = {u: set() for u in ids}
    edges: list[Edge] = []
    if len(ids) > 1:
        coords = np.array([pos[u] for u in ids], dtype=float)
        tree = cKDTree(coords)
        pairs = tree.query_pairs(1.0 + EPS, output_type="ndarray")
        for a, b in pairs:
            u, v = ids[a], ids[b]
            if math.hypot(coords[a, 0] - coords[b, 0], coords[a, 1] - coords[b, 1]) <= 1.0 + EPS:
                adj[u].add(v)
                adj[v].add(u)
                edges.append((min(u, v), max(u, v)))
    edges.sort()
    frozen = {u: frozenset(s) for u, s in adj.items()}
    return UdgInstance(ids, pos, frozen, tuple(edges), _is_connected(ids, frozen))


def _is_connected(ids: Sequence[int], adj: dict[int, frozenset[int]]) -> bool:
    if not ids:
        return False
    seen = {ids[0]}
    queue = deque([ids[0]])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(ids)


# -- cells -----------------------------------------------------------------

def cell_of(p: Sequence[float]) -> Cell:
    # half-open [i*c, (i+1)*c)
    return (math.floor(p[0] / C), math.floor(p[1] / C))


def cell_center(cell: Cell) -> Point:
    return Point((cell[0] + 0.5) * C, (cell[1] + 0.5) * C)


def cell_box(cell: Cell) -> tuple[float, float, float, float]:
    i, j = cell
    return (i * C, j * C, (i + 1) * C, (j + 1) * C)


def cell_corners(cell: Cell) -> tuple[tuple[int, int], ...]:
    """Lattice corners of a cell as integer grid-vertex coordinates."""
    i, j = cell
    return ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1))


def _clip(x0, y0, x1, y1, box) -> bool:
    # Liang-Barsky against the closed box grown by EPS
    xmin, ymin, xmax, ymax = box
    xmin -= EPS
    ymin -= EPS
    xmax += EPS
    ymax += EPS
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return False
            t0 = max(t0, t)
        else:
            if t < t0:
                return False
            t1 = min(t1, t)
    return t0 <= t1


def segment_intersects_cell(a: Sequence[float], b: Sequence[float], cell: Cell) -> bool:
    """Closed segment ``ab`` meets the closed cell square (L-inf tolerance EPS)."""
    return _clip(a[0], a[1], b[0], b[1], cell_box(cell))


def segment_cells(a: Sequence[float], b: Sequence[float]) -> list[Cell]:
    """All cells met by the closed segment ``ab``."""
    i0 = math.floor((min(a[0], b[0]) - EPS) / C)
    i1 = math.floor((max(a[0], b[0]) + EPS) / C)
    j0 = math.floor((min(a[1], b[1]) - EPS) / C)
    j1 = math.floor((max(a[1], b[1]) + EPS) / C)
    return [
        (i, j)
        for i in range(i0, i1 + 1)
        for j in range(j0, j1 + 1)
        if segment_intersects_cell(a, b, (i, j))
    ]


def point_in_triangle(p: Sequence[float], a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> bool:
    """Closed containment; degenerate triangles degrade to their sides."""
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if abs(area2) < EPS:
        return any(_point_segment_dist(p, s, t) <= EPS for s, t in ((a, b), (b, c), (c, a)))
    sign = 1.0 if area2 > 0 else -1.0
    for s, t in ((a, b), (b, c), (c, a)):
        cross = (t[0] - s[0]) * (p[1] - s[1]) - (t[1] - s[1]) * (p[0] - s[0])
        if sign * cross < -EPS * math.hypot(t[0] - s[0], t[1] - s[1]):
            return False
    return True


def _point_segment_dist(p, a, b) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    ll = dx * dx + dy * dy
    t = 0.0 if ll == 0.0 else max(0.0, min(1.0, ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / ll))
    return math.hypot(p[0] - a[0] - t * dx, p[1] - a[1] - t * dy)


def segment_distance(a, b, c, d) -> float:
    """Euclidean distance between closed segments ``ab`` and ``cd``."""
    if _segments_cross(a, b, c, d):
        return 0.0
    return min(
        _point_segment_dist(a, c, d),
        _point_segment_dist(b, c, d),
        _point_segment_dist(c, a, b),
        _point_segment_dist(d, a, b),
    )


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(a, b, c, d) -> bool:
    d1, d2 = _orient(c, d, a), _orient(c, d, b)
    d3, d4 = _orient(a, b, c), _orient(a, b, d)
    return ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4))


# -- triangles ---------------------------------------------------------------

def enumerate_triangles(udg: UdgInstance) -> list[Triangle]:
    """All 3-cycles ``(u, v, w)`` with ``u < v < w``."""
    tris = []
    adj = udg.adj
    for u in udg.ids:
        higher = sorted(v for v in adj[u] if v > u)
        for k, v in enumerate(higher):
            common = adj[v]
            for w in higher[k + 1:]:
                if w in common:
                    tris.append((u, v, w))
    return tris


def triangles_containing_point(g: Sequence[float], udg: UdgInstance) -> set[int]:
    """Vertices of every UDG triangle whose closed region contains ``g``."""
    near = sorted(u for u in udg.ids if math.dist(udg.pos[u], g) <= 1.0 + EPS)
    nearset = set(near)
    out: set[int] = set()
    for k, u in enumerate(near):
        for v in near[k + 1:]:
            if v not in udg.adj[u]:
                continue
            for w in udg.adj[u] & udg.adj[v] & nearset:
                if w > v and point_in_triangle(g, udg.pos[u], udg.pos[v], udg.pos[w]):
                    out.update((u, v, w))
    return out


# -- active cells ----------------------------------------------------------

@dataclass(frozen=True)
class ActiveCellMap:
    active: frozenset[Cell]
    edges_in: dict[Cell, tuple[Edge, ...]]
    c1: dict[Cell, frozenset[int]]
    c2: dict[Cell, frozenset[int]]
    triangles: tuple[Triangle, ...] = field(default=(), repr=False)

    def candidates(self, cell: Cell) -> frozenset[int]:
        return self.c1.get(cell, frozenset()) | self.c2.get(cell, frozenset())


def _edge_cell_hits(xy: np.ndarray, edges: np.ndarray):
    """Vectorised segment/cell incidence; yields (edge_index, i, j) arrays."""
    a = xy[edges[:, 0]]
    b = xy[edges[:, 1]]
    i0 = np.floor((np.minimum(a[:, 0], b[:, 0]) - EPS) / C).astype(np.int64)
    j0 = np.floor((np.minimum(a[:, 1], b[:, 1]) - EPS) / C).astype(np.int64)
    span = int(math.floor(1.0 / C)) + 3
    di, dj = np.meshgrid(np.arange(span), np.arange(span), indexing="ij")
    di, dj = di.ravel(), dj.ravel()
    ci = i0[:, None] + di[None, :]
    cj = j0[:, None] + dj[None, :]
    xmin, ymin = ci * C - EPS, cj * C - EPS
    xmax, ymax = (ci + 1) * C + EPS, (cj + 1) * C + EPS
    x0, y0 = a[:, 0:1], a[:, 1:2]
    dx, dy = (b[:, 0] - a[:, 0])[:, None], (b[:, 1] - a[:, 1])[:, None]
    t0 = np.zeros(ci.shape)
    t1 = np.ones(ci.shape)
    ok = np.ones(ci.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
            p = np.broadcast_to(p, ci.shape)
            zero = p == 0.0
            ok &= ~(zero & (q < 0.0))
            t = q / np.where(zero, 1.0, p)
            t0 = np.where(~zero & (p < 0.0), np.maximum(t0, t), t0)
            t1 = np.where(~zero & (p > 0.0), np.minimum(t1, t), t1)
    ok &= t0 <= t1
    e_idx, k = np.nonzero(ok)
    return e_idx, ci[e_idx, k], cj[e_idx, k]


def _triangle_center_hits(xy: np.ndarray, tris: np.ndarray):
    a, b, c = xy[tris[:, 0]], xy[tris[:, 1]], xy[tris[:, 2]]
    lo = np.minimum(np.minimum(a, b), c)
    i0 = np.floor(lo[:, 0] / C).astype(np.int64)
    j0 = np.floor(lo[:, 1] / C).astype(np.int64)
    span = int(math.floor(1.0 / C)) + 2
    di, dj = np.meshgrid(np.arange(span), np.arange(span), indexing="ij")
    ci = i0[:, None] + di.ravel()[None, :]
    cj = j0[:, None] + dj.ravel()[None, :]
    px, py = (ci + 0.5) * C, (cj + 0.5) * C
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    sign = np.where(area2 >= 0, 1.0, -1.0)[:, None]
    inside = np.ones(ci.shape, dtype=bool)
    for s, t in ((a, b), (b, c), (c, a)):
        ex = (t[:, 0] - s[:, 0])[:, None]
        ey = (t[:, 1] - s[:, 1])[:, None]
        cross = ex * (py - s[:, 1:2]) - ey * (px - s[:, 0:1])
        inside &= sign * cross >= -EPS * np.hypot(ex, ey)
    # degenerate triangles are covered by their edges' own cell hits
    inside &= (np.abs(area2) >= EPS)[:, None]
    t_idx, k = np.nonzero(inside)
    return t_idx, ci[t_idx, k], cj[t_idx, k]


def compute_active_cells(udg: UdgInstance) -> ActiveCellMap:
    """Cells meeting the contour polygon (union of UDG edges and triangles).

    A cell meeting a triangle either meets one of its sides (a UDG edge) or
    lies inside it, in which case the triangle contains the cell center.
    """
    ids = udg.ids
    index = {u: k for k, u in enumerate(ids)}
    xy = np.array([udg.pos[u] for u in ids], dtype=float).reshape(-1, 2)
    edges_in: dict[Cell, list[Edge]] = defaultdict(list)
    c2: dict[Cell, set[int]] = defaultdict(set)
    if udg.edges:
        earr = np.array([(index[u], index[v]) for u, v in udg.edges], dtype=np.int64)
        e_idx, ci, cj = _edge_cell_hits(xy, earr)
        for e, i, j in zip(e_idx.tolist(), ci.tolist(), cj.tolist()):
            u, v = udg.edges[e]
            edges_in[(i, j)].append((u, v))
            c2[(i, j)].update((u, v))
    tris = enumerate_triangles(udg)
    c1: dict[Cell, set[int]] = defaultdict(set)
    if tris:
        tarr = np.array([(index[u], index[v], index[w]) for u, v, w in tris], dtype=np.int64)
        t_idx, ci, cj = _triangle_center_hits(xy, tarr)
        for t, i, j in zip(t_idx.tolist(), ci.tolist(), cj.tolist()):
            c1[(i, j)].update(tris[t])
    # a center on a degenerate triangle lies on one of its sides
    active = frozenset(edges_in) | frozenset(c1)
    return ActiveCellMap(
        active=active,
        edges_in={k: tuple(sorted(v)) for k, v in edges_in.items()},
        c1={k: frozenset(v) for k, v in c1.items()},
        c2={k: frozenset(v) for k, v in c2.items()},
        triangles=tuple(tris),
    )


def local_candidacies(u: int, udg: UdgInstance) -> dict[Cell, int]:
    """Cells ``u`` may represent, computed from ``u``'s 1-hop neighbourhood.

    Maps cell -> priority bit (1 for triangle candidacy, else 0).
    """
    pu = udg.pos[u]
    out: dict[Cell, int] = {}
    for v in udg.adj[u]:
        for cell in segment_cells(pu, udg.pos[v]):
            out.setdefault(cell, 0)
    nbrs = sorted(udg.adj[u])
    for k, v in enumerate(nbrs):
        for w in nbrs[k + 1:]:
            if w not in udg.adj[v]:
                continue
            pts = (pu, udg.pos[v], udg.pos[w])
            if abs(_orient(*pts)) < EPS:
                continue
            i0 = math.floor(min(p.x for p in pts) / C)
            i1 = math.floor(max(p.x for p in pts) / C)
            j0 = math.floor(min(p.y for p in pts) / C)
            j1 = math.floor(max(p.y for p in pts) / C)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    if point_in_triangle(cell_center((i, j)), *pts):
                        out[(i, j)] = 1
    return out


# -- holes -----------------------------------------------------------------

def has_enclosed_inactive_region(cells: ActiveCellMap | Iterable[Cell]) -> bool:
    """True iff a bounded component of inactive cells is enclosed by active ones.

    Inactive cells are flood-filled with 8-connectivity: two inactive cells
    touching at a corner whose other two cells are active meet at a loose
    vertex, which the cell polygon excludes, so they are not separated.
    """
    active = cells.active if isinstance(cells, ActiveCellMap) else frozenset(cells)
    if not active:
        return False
    i0 = min(i for i, _ in active) - 1
    i1 = max(i for i, _ in active) + 1
    j0 = min(j for _, j in active) - 1
    j1 = max(j for _, j in active) + 1
    start = (i0, j0)
    seen = {start}
    queue = deque([start])
    while queue:
        i, j = queue.popleft()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                nb = (i + di, j + dj)
                if (
                    i0 <= nb[0] <= i1
                    and j0 <= nb[1] <= j1
                    and nb not in seen
                    and nb not in active
                ):
                    seen.add(nb)
                    queue.append(nb)
    total = (i1 - i0 + 1) * (j1 - j0 + 1)
    return len(seen) + len(active) < total
