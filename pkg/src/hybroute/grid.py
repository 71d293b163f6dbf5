"""Grid graph, representative election and the representation of grid edges.

The distributed algorithms run on a :class:`~hybroute.sim.SimNetwork` over
the UDG; the centralized builders are kept as oracles.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .geometry import (
    ActiveCellMap,
    Cell,
    Point,
    UdgInstance,
    C,
    compute_active_cells,
    local_candidacies,
)
from .sim import (
    VID_BASE,
    Channel,
    Context,
    Id,
    Message,
    Mode,
    RoundLimitExceeded,
    SimNetwork,
    VirtualId,
    grid_id_of,
)

#: Direction name -> cell offset.
DIRS: dict[str, tuple[int, int]] = {"N": (0, 1), "S": (0, -1), "E": (1, 0), "W": (-1, 0)}
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}

AG_ROUNDS = 3
BR_ROUNDS = 6
BFS_DEPTH = 3


class GridError(RuntimeError):
    pass


class EmptyCandidates(GridError):
    pass


class DisagreementDetected(GridError):
    pass


class NoPathWithin3Hops(GridError):
    pass


class AdapterBudgetExceeded(GridError):
    pass


def edge_key(a: Cell, b: Cell) -> tuple[Cell, Cell]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class GridGraph:
    nodes: frozenset[Cell]
    edges: tuple[tuple[Cell, Cell], ...]

    @classmethod
    def from_cells(cls, cells: ActiveCellMap | Iterable[Cell]) -> "GridGraph":
        nodes = frozenset(cells.active if isinstance(cells, ActiveCellMap) else cells)
        edges = []
        for i, j in nodes:
            for nb in ((i + 1, j), (i, j + 1)):
                if nb in nodes:
                    edges.append(((i, j), nb))
        return cls(nodes, tuple(sorted(edges)))

    def neighbor(self, g: Cell, d: str) -> Cell | None:
        di, dj = DIRS[d]
        nb = (g[0] + di, g[1] + dj)
        return nb if nb in self.nodes else None

    def neighbors(self, g: Cell) -> list[Cell]:
        return [nb for d in "NSEW" if (nb := self.neighbor(g, d)) is not None]

    def adjacency(self) -> dict[Cell, list[Cell]]:
        return {g: self.neighbors(g) for g in self.nodes}

    def is_connected(self) -> bool:
        if not self.nodes:
            return False
        start = min(self.nodes)
        seen = {start}
        queue = deque([start])
        while queue:
            g = queue.popleft()
            for nb in self.neighbors(g):
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return len(seen) == len(self.nodes)


# -- representatives ---------------------------------------------------------

def rank_key(g: Cell, p: Sequence[float], uid: int, bit: int) -> tuple:
    """Smaller is better: triangle candidates first, then distance, then id."""
    return (-bit, math.hypot(p[0] - (g[0] + 0.5) * C, p[1] - (g[1] + 0.5) * C), uid)


def elect_representative(
    g: Cell, c1: Iterable[int], c2: Iterable[int], positions: Mapping[int, Sequence[float]]
) -> int:
    c1 = set(c1)
    pool = [(u, 1) for u in c1] or [(u, 0) for u in set(c2)]
    if not pool:
        raise EmptyCandidates(f"cell {g} has no candidates")
    return min(pool, key=lambda ub: rank_key(g, positions[ub[0]], ub[0], ub[1]))[0]


def elect_all(udg: UdgInstance, cells: ActiveCellMap) -> dict[Cell, int]:
    return {
        g: elect_representative(g, cells.c1.get(g, ()), cells.c2.get(g, ()), udg.pos)
        for g in sorted(cells.active)
    }


def _flush(ctx: Context, mode: Mode, by_dst: dict[int, list[tuple]]) -> None:
    """Send records tagged with their recipient: one broadcast or per-edge unicasts."""
    if not by_dst:
        return
    if mode is Mode.BROADCAST:
        recs = [r for d in sorted(by_dst) for r in by_dst[d]]
        ctx.broadcast(*recs)
    else:
        for d in sorted(by_dst):
            ctx.send(d, *by_dst[d])


class AgProgram:
    """Best-candidate flooding for every cell this node hears about."""

    def __init__(self, uid: int, pos: Point, candidacies: Mapping[Cell, int], t0: int = 0):
        self.uid = uid
        self.t0 = t0
        self.pos = pos
        self.candidacies = dict(candidacies)
        self.best: dict[Cell, tuple] = {}
        self.record: dict[Cell, tuple] = {}
        self.changed: set[Cell] = set()
        for g, bit in self.candidacies.items():
            self.best[g] = rank_key(g, pos, uid, bit)
            self.record[g] = (g, pos, Id(uid), bit)
            self.changed.add(g)

    def idle(self) -> bool:
        return not self.changed

    def on_round(self, ctx: Context, inbox: Sequence[Message]) -> None:
        for msg in inbox:
            for g, p, u, bit in msg.records:
                rec = self.record.get(g)
                if rec is not None and rec[2] == u:
                    continue
                key = rank_key(g, p, int(u), bit)
                cur = self.best.get(g)
                if cur is None or key < cur:
                    self.best[g] = key
                    self.record[g] = (g, p, u, bit)
                    self.changed.add(g)
        if ctx.final or ctx.round - self.t0 >= AG_ROUNDS:
            self.changed.clear()
            return
        if self.changed:
            ctx.broadcast(*(self.record[g] for g in sorted(self.changed)))
            self.changed.clear()


def run_Ag(net: SimNetwork, udg: UdgInstance) -> dict[Cell, int]:
    """Elect every representative in exactly three rounds of flooding."""
    t0 = net.round
    programs = {
        u: AgProgram(u, udg.pos[u], local_candidacies(u, udg), t0) for u in udg.ids
    }
    net.run_rounds(programs, AG_ROUNDS)
    net.finish(programs)
    reps: dict[Cell, int] = {}
    for u, prog in sorted(programs.items()):
        for g in prog.candidacies:
            r = int(prog.record[g][2])
            if reps.setdefault(g, r) != r:
                raise DisagreementDetected(f"candidates of {g} disagree: {reps[g]} vs {r}")
    return dict(sorted(reps.items()))


# -- representation of grid edges --------------------------------------------

_FLOOD, _PATH = 0, 1
_CELLS_PER_RECORD = 4


@dataclass
class Representation:
    rep: dict[Cell, int]
    paths: dict[tuple[Cell, Cell], tuple[int, ...]]
    virtual_ids: dict[Cell, int]
    transit: dict[int, dict[tuple[Cell, Cell], tuple[int | None, int | None]]] = field(default_factory=dict)

    def cells_of(self, u: int) -> list[Cell]:
        return sorted(g for g, r in self.rep.items() if r == u)

    def path(self, a: Cell, b: Cell) -> tuple[int, ...]:
        """Node sequence from rep(a) to rep(b)."""
        p = self.paths[edge_key(a, b)]
        return p if a < b else tuple(reversed(p))

    def cell_of_vid(self) -> dict[int, Cell]:
        return {v: g for g, v in self.virtual_ids.items()}


def assign_virtual_ids(rep: Mapping[Cell, int]) -> dict[Cell, int]:
    by_node: dict[int, list[Cell]] = {}
    for g, r in rep.items():
        by_node.setdefault(r, []).append(g)
    out = {}
    for r, cells in by_node.items():
        cells.sort()
        if len(cells) > VID_BASE:
            raise GridError(f"node {r} represents {len(cells)} > {VID_BASE} cells")
        for i, g in enumerate(cells):
            out[g] = r * VID_BASE + i
    return dict(sorted(out.items()))


class BrProgram:
    """Depth-3 BFS floods from every representative, then path instructions."""

    def __init__(self, uid: int, my_cells: Sequence[Cell], mode: Mode, t0: int = 0):
        self.uid = uid
        self.mode = mode
        self.t0 = t0
        self.my_cells = sorted(my_cells)
        self.hop: dict[int, int] = {}
        self.parent: dict[int, int] = {}
        self.owner: dict[Cell, tuple[int, int]] = {
            g: (uid, uid * VID_BASE + i) for i, g in enumerate(self.my_cells)
        }
        self.transit: dict[tuple[Cell, Cell], list[int | None]] = {}
        self.flood_out: list[tuple] = []
        self.path_out: dict[int, list[tuple]] = {}
        self.launched = False
        if self.my_cells:
            self.flood_out = self._chunks(uid, 0, self.my_cells)

    @staticmethod
    def _chunks(root: int, hop: int, cells: Sequence[Cell]) -> list[tuple]:
        return [
            (_FLOOD, Id(root), hop, k, *cells[k:k + _CELLS_PER_RECORD])
            for k in range(0, len(cells), _CELLS_PER_RECORD)
        ]

    def idle(self) -> bool:
        return not self.flood_out and not self.path_out and (self.launched or not self.my_cells)

    def on_round(self, ctx: Context, inbox: Sequence[Message]) -> None:
        t = ctx.round - self.t0
        heard: dict[int, tuple[int, int, dict[int, Cell]]] = {}
        for msg in inbox:
            for rec in msg.records:
                if rec[0] == _FLOOD:
                    _, r, h, k, *cells = rec
                    r = int(r)
                    if r == self.uid or r in self.hop:
                        continue
                    prev = heard.get(r)
                    src = msg.src if prev is None else min(prev[1], msg.src)
                    got = {} if prev is None else prev[2]
                    got.update({k + i: g for i, g in enumerate(cells)})
                    heard[r] = (h + 1, src, got)
                else:
                    self._on_path(msg.src, rec)
        for r in sorted(heard):
            h, src, got = heard[r]
            self.hop[r] = h
            self.parent[r] = src
            for k, g in got.items():
                self.owner.setdefault(g, (r, r * VID_BASE + k))
            if h < BFS_DEPTH:
                cells = [got[k] for k in sorted(got)]
                self.flood_out.extend(self._chunks(r, h, cells))
        if ctx.final:
            return
        if t == BFS_DEPTH and not self.launched:
            self._start_paths()
            self.launched = True
        if self.flood_out:
            ctx.broadcast(*self.flood_out)
            self.flood_out = []
        if self.path_out:
            _flush(ctx, self.mode, self.path_out)
            self.path_out = {}

    def _start_paths(self) -> None:
        for g in self.my_cells:
            for d in "NSEW":
                di, dj = DIRS[d]
                nb = (g[0] + di, g[1] + dj)
                if nb not in self.owner:
                    continue
                other = self.owner[nb][0]
                key = edge_key(g, nb)
                if other == self.uid:
                    self.transit[key] = [None, None]
                    continue
                if self.uid > other:
                    continue
                if other not in self.parent:
                    raise NoPathWithin3Hops(f"representatives {self.uid} and {other} of {g}-{nb}")
                nxt = self.parent[other]
                self._set(key, g, None, nb, nxt)
                self.path_out.setdefault(nxt, []).append((_PATH, g, nb, Id(other), Id(nxt)))

    def _set(self, key, ga, toward_a, gb, toward_b) -> None:
        ent = self.transit.setdefault(key, [None, None])
        ent[0 if ga == key[0] else 1] = toward_a
        ent[0 if gb == key[0] else 1] = toward_b

    def _on_path(self, src: int, rec: tuple) -> None:
        _, g, nb, target, nxt = rec
        if int(nxt) != self.uid:
            return
        key = edge_key(g, nb)
        target = int(target)
        if target == self.uid:
            self._set(key, g, src, nb, None)
            return
        if target not in self.parent:
            raise NoPathWithin3Hops(f"node {self.uid} lost the tree of {target}")
        fwd = self.parent[target]
        self._set(key, g, src, nb, fwd)
        self.path_out.setdefault(fwd, []).append((_PATH, g, nb, Id(target), Id(fwd)))


def run_Br(net: SimNetwork, udg: UdgInstance, reps: Mapping[Cell, int]) -> Representation:
    """Build the representation of every grid edge in a fixed number of rounds."""
    t0 = net.round
    mine: dict[int, list[Cell]] = {}
    for g, r in reps.items():
        mine.setdefault(r, []).append(g)
    programs = {u: BrProgram(u, mine.get(u, ()), net.mode, t0) for u in udg.ids}
    net.run_rounds(programs, BR_ROUNDS)
    net.finish(programs)
    return _collect(reps, programs)


def _collect(reps: Mapping[Cell, int], programs: Mapping[int, BrProgram]) -> Representation:
    transit = {
        u: {k: tuple(v) for k, v in sorted(p.transit.items())}
        for u, p in sorted(programs.items())
        if p.transit
    }
    vids = assign_virtual_ids(reps)
    for u, p in programs.items():
        for g, (r, vid) in p.owner.items():
            if g in vids and vids[g] != vid:
                raise GridError(f"node {u} holds a stale virtual id for {g}")
    paths = {}
    grid = GridGraph.from_cells(reps)
    for a, b in grid.edges:
        path = [reps[a]]
        seen = {reps[a]}
        while path[-1] != reps[b]:
            ent = transit.get(path[-1], {}).get((a, b))
            if ent is None or ent[1] is None:
                raise NoPathWithin3Hops(f"no stored path for grid edge {a}-{b}")
            path.append(ent[1])
            if ent[1] in seen or len(path) > BFS_DEPTH + 1:
                raise NoPathWithin3Hops(f"path for {a}-{b} exceeds {BFS_DEPTH} hops")
            seen.add(ent[1])
        paths[(a, b)] = tuple(path)
    return Representation(dict(sorted(reps.items())), paths, vids, transit)


def build_representation_oracle(udg: UdgInstance, cells: ActiveCellMap | None = None) -> Representation:
    """Centralized election plus BFS branches of depth at most three."""
    cells = cells if cells is not None else compute_active_cells(udg)
    reps = elect_all(udg, cells)
    grid = GridGraph.from_cells(cells)
    vids = assign_virtual_ids(reps)
    paths: dict[tuple[Cell, Cell], tuple[int, ...]] = {}
    transit: dict[int, dict] = {}
    parents_of: dict[int, dict[int, int]] = {}
    for a, b in grid.edges:
        ra, rb = reps[a], reps[b]
        if ra == rb:
            path = (ra,)
        else:
            lo, hi = (ra, rb) if ra < rb else (rb, ra)
            par = parents_of.get(hi)
            if par is None:
                par = parents_of[hi] = bfs_parents(udg, hi, BFS_DEPTH)
            if lo not in par:
                raise NoPathWithin3Hops(f"representatives {lo} and {hi} of {a}-{b}")
            seq = [lo]
            while seq[-1] != hi:
                seq.append(par[seq[-1]])
            path = tuple(seq) if lo == ra else tuple(reversed(seq))
        paths[(a, b)] = path
        for k, u in enumerate(path):
            toward_a = path[k - 1] if k > 0 else None
            toward_b = path[k + 1] if k + 1 < len(path) else None
            transit.setdefault(u, {})[(a, b)] = (toward_a, toward_b)
    transit = {u: dict(sorted(e.items())) for u, e in sorted(transit.items())}
    return Representation(reps, paths, vids, transit)


def bfs_parents(udg: UdgInstance, root: int, depth: int) -> dict[int, int]:
    """BFS tree of bounded depth; parent = smallest-id neighbour one level up."""
    level = {root: 0}
    frontier = [root]
    parent: dict[int, int] = {}
    for h in range(1, depth + 1):
        nxt: dict[int, int] = {}
        for u in sorted(frontier):
            for v in udg.adj[u]:
                if v not in level and (v not in nxt or u < nxt[v]):
                    nxt[v] = u
        for v, u in nxt.items():
            level[v] = h
            parent[v] = u
        frontier = list(nxt)
    return parent


# -- simulating grid rounds --------------------------------------------------

ADAPTER_WINDOW = 12
GRID_W_MAX = 5


def make_grid_net(grid: GridGraph, R: Representation, *, gamma: float = 1.0, **kw) -> SimNetwork:
    """Grid-level network over virtual ids (CONGEST locally, NCC0 globally)."""
    vid = R.virtual_ids
    adj = {vid[g]: [vid[nb] for nb in grid.neighbors(g)] for g in grid.nodes}
    kw.setdefault("w_max", GRID_W_MAX)
    return SimNetwork(adj, mode=Mode.CONGEST, gamma=gamma, id_of=grid_id_of, **kw)


class _Transport:
    """Per-host relay state for one adapter window."""

    __slots__ = ("uid", "ad", "relay_out", "global_out", "arrived")

    def __init__(self, uid: int, ad: "GridAdapter"):
        self.uid = uid
        self.ad = ad
        self.relay_out: dict[int, list[tuple]] = {}
        self.global_out: dict[int, list[tuple]] = {}
        self.arrived: list[tuple] = []

    def idle(self) -> bool:
        return not self.relay_out and not self.global_out

    def on_round(self, ctx: Context, inbox: Sequence[Message]) -> None:
        ad = self.ad
        for msg in inbox:
            for rec in msg.records:
                # relays start with the next hop's Id, globals with a VirtualId
                if type(rec[0]) is VirtualId:
                    self.arrived.append(rec)
                elif int(rec[0]) == self.uid:
                    self._route(rec, rec[1], rec[2])
        step = ctx.round - ad.t0
        if ctx.final or step >= ad.window - 1:
            return
        if self.relay_out:
            _flush(ctx, ad.net.mode, self.relay_out)
            self.relay_out = {}
        sent = 0
        while self.global_out and sent < ad.net.global_cap:
            dst = min(self.global_out)
            ctx.send_global(dst, *self.global_out.pop(dst))
            sent += 1

    def _route(self, rec: tuple, a: Cell, b: Cell) -> None:
        key = edge_key(a, b)
        ent = self.ad.R.transit[self.uid][key]
        nxt = ent[0] if b == key[0] else ent[1]
        if nxt is None:
            self.arrived.append(rec)
        else:
            self.relay_out.setdefault(nxt, []).append((Id(nxt), a, b, *rec[3:]))


class GridAdapter:
    """Runs grid-level programs; every grid round costs ``window`` UDG rounds.

    Local grid messages travel along the representation paths (at most
    three hops); global ones go directly between hosts.  A host simulating
    several grid nodes multiplexes their traffic inside the window.
    """

    def __init__(
        self,
        net: SimNetwork,
        grid: GridGraph,
        R: Representation,
        *,
        window: int = ADAPTER_WINDOW,
        gamma: float = 1.0,
        **kw,
    ):
        self.net = net
        self.grid = grid
        self.R = R
        self.window = window
        self.vnet = make_grid_net(grid, R, gamma=gamma, **kw)
        self.cell_of_vid = R.cell_of_vid()
        self.udg_rounds: list[int] = []
        self.t0 = 0

    @property
    def round(self) -> int:
        return self.vnet.round

    def host(self, vid: int) -> int:
        return vid // VID_BASE

    def run_round(self, programs: Mapping[int, object], wake: Iterable[int] | None = None) -> "GridAdapter":
        vnet = self.vnet
        vnet.begin_round()
        vnet.invoke(programs, wake)
        msgs = vnet.take_outgoing()
        start = self.net.round
        vnet.deliver(self._transport(msgs))
        vnet.end_round()
        self.udg_rounds.append(self.net.round - start)
        return self

    def run_until(self, programs, stop, limit: int, wake=None):
        rounds = 0
        while not stop(self):
            if rounds >= limit:
                raise RoundLimitExceeded(f"grid stage did not finish within {limit} rounds")
            self.run_round(programs, wake() if callable(wake) else wake)
            rounds += 1
        return self, rounds

    def finish(self, programs) -> None:
        self.vnet.finish(programs)

    @property
    def pending(self) -> bool:
        return self.vnet.pending

    def _transport(self, msgs: list[Message]) -> list[Message]:
        """Carry grid messages over the UDG; return them as delivered."""
        delivered: list[Message] = []
        hosts: dict[int, _Transport] = {}
        expect: dict[tuple, Message] = {}

        def tr(u: int) -> _Transport:
            t = hosts.get(u)
            if t is None:
                t = hosts[u] = _Transport(u, self)
            return t

        for m in msgs:
            hs, hd = self.host(m.src), self.host(m.dst)
            if hs == hd:
                delivered.append(m)
                continue
            if m.channel is Channel.LOCAL:
                expect[(m.src, m.dst, None)] = m
                a, b = self.cell_of_vid[m.src], self.cell_of_vid[m.dst]
                for rec in m.records:
                    tr(hs)._route((Id(hs), a, b, *rec), a, b)
            else:
                expect[(m.src, m.dst, m.seq)] = m
                for rec in m.records:
                    tr(hs).global_out.setdefault(hd, []).append(
                        (VirtualId(m.src), VirtualId(m.dst), m.seq, *rec)
                    )
        if not expect:
            self.net.advance(self.window)
            return delivered
        t0 = self.t0 = self.net.round
        programs = _HostMap(hosts, self)
        for _ in range(self.window):
            if not any(not t.idle() for t in hosts.values()) and not self.net.pending:
                self.net.advance(self.window - (self.net.round - t0))
                break
            self.net.run_round(programs, wake=[u for u, t in hosts.items() if not t.idle()])
        leftover = [u for u, t in hosts.items() if not t.idle()]
        if leftover or self.net.pending:
            raise AdapterBudgetExceeded(
                f"hosts {leftover[:5]} still hold traffic after {self.window} UDG rounds"
            )
        got: dict[tuple, list[tuple]] = {}
        for t in hosts.values():
            for rec in t.arrived:
                if type(rec[0]) is VirtualId:
                    src, dst, seq, *body = rec
                    got.setdefault((int(src), int(dst), seq), []).append(tuple(body))
                else:
                    _, a, b, *body = rec
                    key = (self.R.virtual_ids[a], self.R.virtual_ids[b], None)
                    got.setdefault(key, []).append(tuple(body))
        for key, m in expect.items():
            recs = got.pop(key, None)
            if recs is None or tuple(recs) != m.records:
                raise AdapterBudgetExceeded(f"grid message {key} was not delivered intact")
            delivered.append(m)
        if got:
            raise AdapterBudgetExceeded(f"unexpected deliveries {sorted(got)[:3]}")
        delivered.sort(key=lambda m: m.seq)
        return delivered


class _HostMap(dict):
    """Transport programs, created on demand for hosts a relay reaches."""

    def __init__(self, hosts: dict[int, _Transport], ad: GridAdapter):
        super().__init__()
        self.hosts = hosts
        self.ad = ad

    def get(self, u, default=None):
        t = self.hosts.get(u)
        if t is None:
            t = self.hosts[u] = _Transport(u, self.ad)
        return t
