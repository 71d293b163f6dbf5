"""Centralized oracles: graph distances, the cell graph and cell-polygon geodesics.

Cell-polygon geometry is done in grid units (coordinates divided by the
cell side), where cell corners are integer points.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from ..geometry import C, Cell, UdgInstance

Corner = tuple[int, int]
TOL = 1e-9


class PointOutsidePolygon(ValueError):
    pass


def bfs_distances(adj: Mapping[Hashable, Iterable[Hashable]], source) -> dict:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def dijkstra_distances(adj: Mapping[Hashable, Iterable[Hashable]], source, weight=None) -> dict:
    """Shortest paths through scipy; unit weights unless ``weight(u, v)`` is given."""
    nodes = sorted(adj)
    index = {u: i for i, u in enumerate(nodes)}
    rows, cols, vals = [], [], []
    for u in nodes:
        for v in adj[u]:
            rows.append(index[u])
            cols.append(index[v])
            vals.append(1.0 if weight is None else float(weight(u, v)))
    m = csr_matrix((vals, (rows, cols)), shape=(len(nodes), len(nodes)))
    d = dijkstra(m, indices=index[source])
    return {u: (int(x) if weight is None else float(x)) for u, x in zip(nodes, d) if np.isfinite(x)}


def euclidean_distances(udg: UdgInstance, source: int) -> dict[int, float]:
    """Length of the shortest path from source with Euclidean edge weights."""
    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v in udg.adj[u]:
            nd = d + udg.dist(u, v)
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


# -- the cell graph ------------------------------------------------------------

def _around(v: Corner) -> tuple[Cell, Cell, Cell, Cell]:
    i, j = v
    return (i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)  # SW, SE, NW, NE


def is_loose(v: Corner, active: frozenset[Cell] | set[Cell]) -> bool:
    sw, se, nw, ne = (g in active for g in _around(v))
    return (sw and ne and not se and not nw) or (se and nw and not sw and not ne)


def cell_corners(g: Cell) -> tuple[Corner, ...]:
    i, j = g
    return ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1))


@dataclass
class CellGraph:
    vertices: frozenset[Corner]
    edges: frozenset[tuple[Corner, Corner]]
    adj: dict[Corner, list[Corner]]

    def hop(self, a: Corner, b: Corner) -> int:
        return bfs_distances(self.adj, a)[b]


def build_cell_graph(active: Iterable[Cell]) -> CellGraph:
    active = frozenset(active)
    corners = {v for g in active for v in cell_corners(g)}
    verts = frozenset(v for v in corners if not is_loose(v, active))
    edges = set()
    for i, j in active:
        for a, b in (((i, j), (i + 1, j)), ((i, j), (i, j + 1)), ((i + 1, j), (i + 1, j + 1)), ((i, j + 1), (i + 1, j + 1))):
            if a in verts and b in verts:
                edges.add((a, b))
    adj: dict[Corner, list[Corner]] = {v: [] for v in verts}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return CellGraph(verts, frozenset(edges), {v: sorted(n) for v, n in sorted(adj.items())})


# -- geodesics in the cell polygon ------------------------------------------------

def _cells_at(x: float, y: float) -> list[Cell]:
    xs = [round(x) - 1, round(x)] if abs(x - round(x)) < TOL else [math.floor(x)]
    ys = [round(y) - 1, round(y)] if abs(y - round(y)) < TOL else [math.floor(y)]
    return [(i, j) for i in xs for j in ys]


class CellPolygon:
    """The union of active cells with every loose vertex notched away.

    The notches are triangles of leg ``c / 100`` at the loose corner; their
    new vertices are convex, so geodesics bend only at reflex cell corners.
    """

    NOTCH = 0.01  # in grid units, i.e. c / 100

    def __init__(self, active: Iterable[Cell]):
        self.active = frozenset(active)
        corners = {v for g in self.active for v in cell_corners(g)}
        self.loose = frozenset(v for v in corners if is_loose(v, self.active))
        self.reflex = sorted(v for v in corners if sum(g in self.active for g in _around(v)) == 3)
        n = len(self.reflex)
        self._rr = np.full((n, n), np.inf)
        for a in range(n):
            self._rr[a, a] = 0.0
            for b in range(a + 1, n):
                if self.visible(self.reflex[a], self.reflex[b]):
                    self._rr[a, b] = self._rr[b, a] = math.dist(self.reflex[a], self.reflex[b])

    def contains(self, p: Sequence[float]) -> bool:
        x, y = p
        for v in self.loose:
            if abs(x - v[0]) + abs(y - v[1]) < self.NOTCH:
                return False
        return any(g in self.active for g in _cells_at(x, y))

    def visible(self, p: Sequence[float], q: Sequence[float]) -> bool:
        """Whether the closed segment pq lies in the polygon."""
        (px, py), (qx, qy) = p, q
        ts = {0.0, 1.0}
        for a, b in ((px, qx), (py, qy)):
            if abs(b - a) > TOL:
                lo, hi = sorted((a, b))
                for k in range(math.ceil(lo - TOL), math.floor(hi + TOL) + 1):
                    t = (k - a) / (b - a)
                    if 0.0 < t < 1.0:
                        ts.add(t)
        ts = sorted(ts)
        for t in ts:
            x, y = px + t * (qx - px), py + t * (qy - py)
            if (round(x), round(y)) in self.loose and abs(x - round(x)) < TOL and abs(y - round(y)) < TOL:
                return False
        for t0, t1 in zip(ts, ts[1:]):
            tm = (t0 + t1) / 2
            if not any(g in self.active for g in _cells_at(px + tm * (qx - px), py + tm * (qy - py))):
                return False
        return all(self.contains(pt) for pt in (p, q))

    def geodesic(self, p: Sequence[float], q: Sequence[float]) -> float:
        """Shortest-path length inside the polygon, in grid units."""
        for pt in (p, q):
            if not self.contains(pt):
                raise PointOutsidePolygon(f"{tuple(pt)} is not in the cell polygon")
        if self.visible(p, q):
            return math.dist(p, q)
        n = len(self.reflex)
        if n == 0:
            raise PointOutsidePolygon("points are in different components")
        dp = np.array([math.dist(p, r) if self.visible(p, r) else np.inf for r in self.reflex])
        dq = np.array([math.dist(q, r) if self.visible(q, r) else np.inf for r in self.reflex])
        m = np.zeros((n + 2, n + 2))
        m[:n, :n] = self._rr
        m[n, :n] = m[:n, n] = dp
        m[n + 1, :n] = m[:n, n + 1] = dq
        m[n, n + 1] = m[n + 1, n] = np.inf
        m[n, n] = m[n + 1, n + 1] = 0.0
        graph = np.where(np.isfinite(m), m, 0.0)
        graph[np.isfinite(m) & (m == 0) & ~np.eye(n + 2, dtype=bool)] = 1e-300
        d = dijkstra(csr_matrix(graph), indices=n)[n + 1]
        if not np.isfinite(d):
            raise PointOutsidePolygon("no path inside the cell polygon")
        return float(d)


def to_grid_units(p: Sequence[float]) -> tuple[float, float]:
    return (p[0] / C, p[1] / C)
