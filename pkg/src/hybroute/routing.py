"""Stateless routing: exact interval routing on the grid graph and its lift
to the unit-disk graph through the representation.

A grid node decides from its own two intervals, the intervals of its (at
most four) grid neighbours and the target's label.  A UDG node decides from
its neighbour list, the grid states of the cells it represents, its transit
entries and the neighbour the packet arrived from.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Mapping

from .geometry import Cell, UdgInstance, cell_of
from .grid import DIRS, GridGraph, Representation, edge_key
from .labelling import GridLabel, Interval
from .sim import Id

LABEL_FORMAT = "<5Q"


class RoutingError(RuntimeError):
    pass


class NoMoveAvailable(RoutingError):
    pass


class InactiveCell(RoutingError):
    pass


class MissingTransitState(RoutingError):
    pass


class RelationKind(enum.Enum):
    EQUAL = "equal"
    SUBSET = "subset"
    SUPERSET = "superset"
    INCOMPARABLE = "incomparable"


def interval_relation(a: Interval, b: Interval) -> RelationKind:
    if a == b:
        return RelationKind.EQUAL
    if b.contains(a):
        return RelationKind.SUBSET
    if a.contains(b):
        return RelationKind.SUPERSET
    return RelationKind.INCOMPARABLE


@dataclass(frozen=True)
class RoutingLabel:
    grid: GridLabel
    target_id: int

    def encode(self) -> bytes:
        o, p = self.grid.own, self.grid.portal
        return struct.pack(LABEL_FORMAT, o.l, o.r, p.l, p.r, self.target_id)

    @classmethod
    def decode(cls, data: bytes) -> "RoutingLabel":
        lo, ro, lp, rp, tid = struct.unpack(LABEL_FORMAT, data)
        return cls(GridLabel(Interval(lo, ro), Interval(lp, rp)), tid)


@dataclass(frozen=True)
class GridNodeState:
    label: GridLabel
    nbrs: Mapping[str, GridLabel] = field(default_factory=dict)

    def neighbor(self, d: str) -> GridLabel | None:
        return self.nbrs.get(d)


def _toward(g: Interval, nb: Interval | None, t: Interval) -> bool:
    # (g ⊂ nb ⊆ t) or (t ⊆ nb ⊂ g) or (g ⋈ t and g ⊂ nb)
    if nb is None:
        return False
    if nb.strictly_contains(g) and t.contains(nb):
        return True
    if nb.contains(t) and g.strictly_contains(nb):
        return True
    incomparable = interval_relation(g, t) is RelationKind.INCOMPARABLE
    return incomparable and nb.strictly_contains(g)


def try_horizontal(state: GridNodeState, t: RoutingLabel) -> str | None:
    gp, tp = state.label.portal, t.grid.portal
    if gp == tp:
        return None
    for d in "WE":
        nb = state.neighbor(d)
        if _toward(gp, nb.portal if nb else None, tp):
            return d
    return None


def go_vertical(state: GridNodeState, t: RoutingLabel) -> str:
    gl, tl = state.label.own, t.grid.own
    for d in "NS":
        nb = state.neighbor(d)
        if _toward(gl, nb.own if nb else None, tl):
            return d
    raise NoMoveAvailable(f"no vertical move from {gl} toward {tl}")


class _Arrived:
    def __repr__(self) -> str:
        return "ARRIVED"


ARRIVED = _Arrived()


def rho_gamma(state: GridNodeState, t: RoutingLabel):
    """Direction letter of the next grid node, or ARRIVED."""
    if state.label.own == t.grid.own:
        return ARRIVED
    return try_horizontal(state, t) or go_vertical(state, t)


def step_cell(g: Cell, d: str) -> Cell:
    dx, dy = DIRS[d]
    return (g[0] + dx, g[1] + dy)


def grid_states(grid: GridGraph, labels: Mapping[Cell, GridLabel]) -> dict[Cell, GridNodeState]:
    """Per-cell routing state built directly from a label map."""
    out = {}
    for g in sorted(grid.nodes):
        nbrs = {d: labels[nb] for d in "NSEW" if (nb := grid.neighbor(g, d)) is not None}
        out[g] = GridNodeState(labels[g], nbrs)
    return out


def route_grid(states: Mapping[Cell, GridNodeState], s: Cell, t: RoutingLabel) -> list[Cell]:
    """Cells visited from s until the target's cell, both ends included."""
    path = [s]
    for _ in range(len(states) + 1):
        d = rho_gamma(states[path[-1]], t)
        if d is ARRIVED:
            return path
        path.append(step_cell(path[-1], d))
        if path[-1] not in states:
            raise NoMoveAvailable(f"moved off the grid at {path[-1]}")
    raise RoutingError(f"no arrival within {len(states)} steps from {s}")


# -- the UDG scheme ------------------------------------------------------------

@dataclass
class NodeState:
    """Everything node ``uid`` consults when forwarding."""

    uid: int
    cell: Cell
    cell_rep: int
    nbrs: frozenset[int]
    nbr_cell: dict[int, Cell]
    # cells this node represents plus the far ends of its transit entries
    known: dict[Cell, GridNodeState]
    represents: frozenset[Cell]
    transit: dict[tuple[Cell, Cell], tuple[int | None, int | None]]


def make_label(v: int, udg: UdgInstance, R: Representation, labels: Mapping[Cell, GridLabel]) -> RoutingLabel:
    g = cell_of(udg.pos[v])
    if g not in labels:
        raise InactiveCell(f"node {v} lies in inactive cell {g}")
    return RoutingLabel(labels[g], v)


def node_states(udg: UdgInstance, R: Representation, gstates: Mapping[Cell, GridNodeState]) -> dict[int, NodeState]:
    """Forwarding state of every node.

    Besides the cells it represents, a node keeps the grid state of both
    ends of every representation path it lies on.
    """
    cells = {u: cell_of(udg.pos[u]) for u in udg.ids}
    out = {}
    for u in udg.ids:
        represents = frozenset(R.cells_of(u))
        transit = dict(R.transit.get(u, {}))
        wanted = set(represents)
        for a, b in transit:
            wanted.update((a, b))
        out[u] = NodeState(
            uid=u,
            cell=cells[u],
            cell_rep=R.rep[cells[u]],
            nbrs=frozenset(udg.adj[u]),
            nbr_cell={w: cells[w] for w in udg.adj[u]},
            known={g: gstates[g] for g in sorted(wanted)},
            represents=represents,
            transit=transit,
        )
    return out


def _leave(st: NodeState, g: Cell, t: RoutingLabel) -> int:
    """Rule (3): evaluate grid routing at g (represented here) until a hop."""
    for _ in range(len(st.represents) + 1):
        d = rho_gamma(st.known[g], t)
        if d is ARRIVED:
            raise RoutingError(f"target {t.target_id} in cell {g} but not adjacent to {st.uid}")
        nxt = step_cell(g, d)
        a, b = edge_key(g, nxt)
        ent = st.transit.get((a, b))
        if ent is None:
            raise MissingTransitState(f"node {st.uid} lacks the path for {g}->{nxt}")
        hop = ent[1] if g == a else ent[0]
        if hop is not None:
            return hop
        g = nxt  # both cells represented here; keep going without a hop
    raise RoutingError(f"grid routing cycles inside node {st.uid}")


def _contexts(st: NodeState, prev: int, t: RoutingLabel):
    """Transit entries consistent with arriving from prev, smallest key first."""
    for (a, b), (ta, tb) in sorted(st.transit.items()):
        for frm, to, back, fwd in ((a, b, ta, tb), (b, a, tb, ta)):
            if back != prev:
                continue
            d = rho_gamma(st.known[frm], t)
            if d is not ARRIVED and step_cell(frm, d) == to:
                yield to, fwd


def rho_G(st: NodeState, t: RoutingLabel, prev: int | None = None) -> int:
    """Next UDG hop from st.uid toward t.target_id."""
    tid = t.target_id
    if tid == st.uid:
        raise RoutingError("already at the target")
    if tid in st.nbrs:
        return tid
    if prev is None:
        if st.cell_rep != st.uid:
            return st.cell_rep
        return _leave(st, st.cell, t)
    options = [fwd if fwd is not None else _leave(st, to, t) for to, fwd in _contexts(st, prev, t)]
    if options:
        # several grid edges may share this hop; never bounce straight back
        forward = [u for u in options if u != prev]
        return (forward or options)[0]
    src_cell = st.nbr_cell.get(prev)
    if src_cell is not None and src_cell in st.represents:
        return _leave(st, src_cell, t)
    raise MissingTransitState(f"node {st.uid} cannot place a packet from {prev}")


def route_udg(states: Mapping[int, NodeState], s: int, t: RoutingLabel, limit: int | None = None) -> list[int]:
    """Hop sequence from s to the target, both ends included."""
    limit = limit if limit is not None else 4 * len(states) + 4
    path, prev = [s], None
    while path[-1] != t.target_id:
        if len(path) > limit:
            raise RoutingError(f"no arrival within {limit} hops from {s}")
        nxt = rho_G(states[path[-1]], t, prev)
        prev = path[-1]
        path.append(nxt)
    return path


# -- routing inside the simulator ------------------------------------------------

class RouteProgram:
    """Forwards the packet one hop per round; records the hops it makes."""

    def __init__(self, st: NodeState, hops: list[int]):
        self.st = st
        self.hops = hops
        self.start: RoutingLabel | None = None

    def idle(self) -> bool:
        return self.start is None

    def on_round(self, ctx, inbox) -> None:
        if self.start is not None:
            label, self.start = self.start, None
            self.forward(ctx, label, None)
        for msg in inbox:
            for rec in msg.records:
                if len(rec) == 6 and rec[0] != self.st.uid:
                    continue  # broadcast copy addressed to another neighbour
                words = rec[-5:]
                label = RoutingLabel(GridLabel(Interval(words[0], words[1]), Interval(words[2], words[3])), words[4])
                if label.target_id == self.st.uid or ctx.final:
                    continue
                self.forward(ctx, label, msg.src)

    def forward(self, ctx, label: RoutingLabel, prev: int | None) -> None:
        nxt = rho_G(self.st, label, prev)
        self.hops.append(nxt)
        o, p = label.grid.own, label.grid.portal
        words = (o.l, o.r, p.l, p.r, label.target_id)
        if ctx.net.mode.value == "broadcast":
            ctx.broadcast((Id(nxt), *words))
        else:
            ctx.send(nxt, words)


def route_in_network(net, states: Mapping[int, NodeState], s: int, t: RoutingLabel, limit: int | None = None) -> list[int]:
    """Route one packet through ``net`` one local hop per round."""
    limit = limit if limit is not None else 4 * len(states) + 4
    hops = [s]
    if s == t.target_id:
        return hops
    programs = {u: RouteProgram(st, hops) for u, st in states.items()}
    programs[s].start = t
    net.run_round(programs, wake=(s,))
    while hops[-1] != t.target_id:
        if len(hops) > limit:
            raise RoutingError(f"no arrival within {limit} hops from {s}")
        net.run_round(programs, wake=())
    net.run_round(programs, wake=())
    return hops
