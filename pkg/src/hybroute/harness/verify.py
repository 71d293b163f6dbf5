"""Stretch measurements and the per-pair chain of distance inequalities."""
from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Mapping

from ..geometry import C, Cell, cell_of
from ..sim import SimNetwork
from ..grid import GridGraph
from ..routing import ARRIVED, GridNodeState, NoMoveAvailable, RoutingLabel, rho_gamma, route_in_network, route_udg, step_cell
from .oracles import (
    CellPolygon,
    bfs_distances,
    build_cell_graph,
    cell_corners,
    euclidean_distances,
    to_grid_units,
)
from .pipeline import Pipeline

TOL = 1e-6
POLYGON_CELL_CAP = 200


def sample_pairs(p: Pipeline, k: int, seed: int, *, non_adjacent: bool = False, per_source: int = 20):
    """k distinct-endpoint pairs drawn from ``seed``, grouped by source."""
    rng = random.Random(seed)
    ids = list(p.udg.ids)
    pairs = []
    while len(pairs) < k:
        s = rng.choice(ids)
        pool = [t for t in ids if t != s and not (non_adjacent and t in p.udg.adj[s])]
        if not pool:
            continue
        for t in rng.sample(pool, min(per_source, len(pool), k - len(pairs))):
            pairs.append((s, t))
    return pairs


@dataclass
class PairRecord:
    s: int
    t: int
    dist_G: float
    hop_G: int
    routed_hops: int
    stretch: float
    distance_ratio: float


@dataclass
class StretchReport:
    pairs: list[PairRecord]
    max_stretch: float
    mean_stretch: float
    p99_stretch: float
    max_distance_ratio: float
    rounds: dict[str, int]
    violations: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "StretchReport":
        doc = json.loads(text)
        doc["pairs"] = [PairRecord(**r) for r in doc["pairs"]]
        return cls(**doc)


def stretch_report(
    p: Pipeline, k: int, seed: int, *, non_adjacent: bool = False, simulate: bool = True
) -> StretchReport:
    """Route k seeded pairs and compare hop counts with shortest paths.

    ``stretch`` is routed hops over the hop distance.  ``dist_G`` is the
    Euclidean length of a shortest path and ``distance_ratio`` is routed
    hops over ``dist_G``; the hop bounds are checked against ``dist_G``.
    With ``simulate`` every packet travels through a UDG network hop by hop
    instead of the direct loop.
    """
    pairs = sample_pairs(p, k, seed, non_adjacent=non_adjacent)
    net = SimNetwork(p.udg.adj, mode=p.mode, track_knowledge=False) if simulate else None
    euclid: dict[int, dict[int, float]] = {}
    hops: dict[int, dict[int, int]] = {}
    records, violations = [], []
    for s, t in sorted(pairs):
        if s not in euclid:
            euclid[s] = euclidean_distances(p.udg, s)
            hops[s] = bfs_distances(p.udg.adj, s)
        label = p.label(t)
        path = route_in_network(net, p.nodes, s, label) if simulate else route_udg(p.nodes, s, label)
        h = len(path) - 1
        d = euclid[s][t]
        records.append(PairRecord(s, t, d, hops[s][t], h, h / hops[s][t], h / d))
        if hops[s][t] == 1 and h != 1:
            violations.append(f"adjacent pair {s}->{t} took {h} hops")
        if hops[s][t] > 1 and (h > 36 * d or h > 22 * d + 14):
            violations.append(f"pair {s}->{t}: {h} hops at distance {d:.6f}")
    st = sorted(r.stretch for r in records)
    p99 = st[min(len(st) - 1, math.ceil(0.99 * len(st)) - 1)] if st else 0.0
    return StretchReport(
        records,
        max(st, default=0.0),
        sum(st) / len(st) if st else 0.0,
        p99,
        max((r.distance_ratio for r in records), default=0.0),
        dict(p.rounds),
        violations,
    )


def grid_exactness(grid: GridGraph, states: Mapping[Cell, GridNodeState]) -> list[tuple[Cell, Cell, int, int]]:
    """All (s, t, routed, shortest) with a routed grid path that is not shortest.

    Grid routing is stateless, so for a fixed target one next-hop per cell
    determines every path; lengths follow by walking the pointers once.
    ``routed`` is -1 when the walk from s never arrives.
    """
    adj = grid.adjacency()
    bad = []
    for t in sorted(grid.nodes):
        label = RoutingLabel(states[t].label, 0)
        nxt: dict[Cell, Cell | None] = {}
        for g in grid.nodes:
            try:
                d = rho_gamma(states[g], label)
            except NoMoveAvailable:
                nxt[g] = None
                continue
            nxt[g] = g if d is ARRIVED else step_cell(g, d)
        length: dict[Cell, int] = {t: 0} if nxt[t] == t else {}
        for s in grid.nodes:
            walk, g, seen = [], s, set()
            while g is not None and g not in length:
                if g in seen or g not in nxt or nxt[g] == g:
                    g = None  # cycle, step off the grid or a false arrival
                    break
                seen.add(g)
                walk.append(g)
                g = nxt[g]
            base = length[g] if g is not None else -1
            for k, u in enumerate(reversed(walk)):
                length[u] = -1 if base < 0 else base + k + 1
        ref = bfs_distances(adj, t)
        for s in sorted(grid.nodes):
            if length.get(s, -1) != ref[s]:
                bad.append((s, t, length.get(s, -1), ref[s]))
    return bad


# -- the inequality chain ----------------------------------------------------------

@dataclass
class ChainEntry:
    s: int
    t: int
    values: dict[str, float]


@dataclass
class ChainReport:
    entries: list[ChainEntry]
    violations: list[dict]
    skipped_adjacent: int = 0
    polygon_checked: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations


class _ChainContext:
    def __init__(self, p: Pipeline, polygon: bool):
        self.p = p
        self.gadj = p.grid.adjacency()
        self.cg = build_cell_graph(p.grid.nodes)
        self.poly = CellPolygon(p.grid.nodes) if polygon else None
        self._grid_bfs: dict = {}
        self._cg_bfs: dict = {}

    def hop_grid(self, a, b) -> int:
        if a not in self._grid_bfs:
            self._grid_bfs[a] = bfs_distances(self.gadj, a)
        return self._grid_bfs[a][b]

    def hop_cells(self, a, b) -> int:
        if a not in self._cg_bfs:
            self._cg_bfs[a] = bfs_distances(self.cg.adj, a)
        return self._cg_bfs[a][b]


def verify_chain(p: Pipeline, pairs, *, polygon: bool | None = None) -> ChainReport:
    """Evaluate every link of the stretch chain on each non-adjacent pair.

    Checked per pair, with c the cell side:

    * hops <= (3/c) dist_grid + 2
    * dist_grid <= 2 dist_cellgraph between some non-loose corners
    * dist_cellgraph <= sqrt(2) dist_polygon for those corners
    * dist_polygon(s, t) <= dist_G(s, t)
    * hops <= 22 dist_G + 14 and hops <= 36 dist_G

    The two polygon checks run only when there are at most
    ``POLYGON_CELL_CAP`` active cells (or when ``polygon`` forces them).
    """
    if polygon is None:
        polygon = len(p.grid.nodes) <= POLYGON_CELL_CAP
    cx = _ChainContext(p, polygon)
    entries, violations, skipped = [], [], 0
    euclid: dict[int, dict[int, float]] = {}

    def check(s, t, name, lhs, rhs, witness):
        if lhs > rhs + TOL:
            violations.append({"s": s, "t": t, "inequality": name, "lhs": lhs, "rhs": rhs, "witness": witness})

    for s, t in pairs:
        if t in p.udg.adj[s] or s == t:
            skipped += 1
            continue
        if s not in euclid:
            euclid[s] = euclidean_distances(p.udg, s)
        dG = euclid[s][t]
        path = route_udg(p.nodes, s, p.label(t))
        hops = len(path) - 1
        gs, gt = cell_of(p.udg.pos[s]), cell_of(p.udg.pos[t])
        h_grid = cx.hop_grid(gs, gt)
        corner_pairs = [
            (a, b)
            for a in cell_corners(gs) if a in cx.cg.vertices
            for b in cell_corners(gt) if b in cx.cg.vertices and a != b
        ]
        h_cells, ca, cb = max((cx.hop_cells(a, b), a, b) for a, b in corner_pairs)
        vals = {
            "hops": float(hops),
            "dist_G": dG,
            "dist_grid": C * h_grid,
            "dist_cellgraph": C * h_cells,
        }
        w = {"path": path, "cells": [gs, gt], "corners": [ca, cb]}
        check(s, t, "hops <= 3/c dist_grid + 2", hops, 3 * h_grid + 2, w)
        check(s, t, "dist_grid <= 2 dist_cellgraph", vals["dist_grid"], 2 * vals["dist_cellgraph"], w)
        if cx.poly is not None:
            d_corners = C * cx.poly.geodesic(ca, cb)
            d_st = C * cx.poly.geodesic(to_grid_units(p.udg.pos[s]), to_grid_units(p.udg.pos[t]))
            vals["dist_polygon_corners"] = d_corners
            vals["dist_polygon"] = d_st
            check(s, t, "dist_cellgraph <= sqrt2 dist_polygon", vals["dist_cellgraph"], math.sqrt(2) * d_corners, w)
            check(s, t, "dist_polygon <= dist_G", d_st, dG, w)
        check(s, t, "hops <= 22 dist_G + 14", hops, 22 * dG + 14, w)
        check(s, t, "hops <= 36 dist_G", hops, 36 * dG, w)
        entries.append(ChainEntry(s, t, vals))
    return ChainReport(entries, violations, skipped, polygon)
