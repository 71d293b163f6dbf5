"""Portals, the portal tree, and interval labels on it.

Trees are given as adjacency maps over integer ids (virtual ids for grid
nodes).  Each labelling stage has a centralized oracle and a distributed
version that runs on any grid-level network: a plain
:class:`~hybroute.sim.SimNetwork` over virtual ids, or a
:class:`~hybroute.grid.GridAdapter` that pays for every grid round in UDG
rounds.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .geometry import Cell
from .grid import DIRS, GridGraph
from .sim import SUB_BASE, SubId, VirtualId

Tree = Mapping[int, Sequence[int]]


class LabelError(RuntimeError):
    pass


class CycleDetected(LabelError):
    pass


@dataclass(frozen=True, order=True)
class Interval:
    l: int
    r: int

    def __post_init__(self):
        if self.l > self.r:
            raise ValueError(f"empty interval [{self.l}, {self.r}]")

    def contains(self, other: "Interval") -> bool:
        return self.l <= other.l and other.r <= self.r

    def strictly_contains(self, other: "Interval") -> bool:
        return self.contains(other) and self != other


@dataclass(frozen=True)
class GridLabel:
    own: Interval
    portal: Interval


# -- portals and the portal tree ----------------------------------------------

def compute_portals(grid: GridGraph) -> list[tuple[Cell, ...]]:
    """Maximal vertical runs of grid nodes, each sorted north to south."""
    portals = []
    for g in sorted(grid.nodes):
        if (g[0], g[1] + 1) in grid.nodes:
            continue
        run = [g]
        while (run[-1][0], run[-1][1] - 1) in grid.nodes:
            run.append((run[-1][0], run[-1][1] - 1))
        portals.append(tuple(run))
    return sorted(portals)


def portal_tree_edges(grid: GridGraph) -> list[tuple[Cell, Cell]]:
    """All vertical edges plus the single horizontal edge added per node rule.

    ``v`` links to its west neighbour when it has one and its south
    neighbour either does not exist or has no west neighbour.
    """
    nodes = grid.nodes
    edges = []
    for g in sorted(nodes):
        i, j = g
        if (i, j - 1) in nodes:
            edges.append(((i, j - 1), g))
        w = (i - 1, j)
        if w in nodes:
            s = (i, j - 1)
            if s not in nodes or (i - 1, j - 1) not in nodes:
                edges.append((w, g))
    return sorted(edges)


def check_acyclic(nodes: Iterable, edges: Iterable[tuple]) -> None:
    """Raise :class:`CycleDetected` unless the edges form a spanning tree."""
    nodes = list(nodes)
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    count = 0
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise CycleDetected(f"edge {a}-{b} closes a cycle")
        parent[ra] = rb
        count += 1
    if nodes and count != len(nodes) - 1:
        raise CycleDetected("portal tree does not span the grid")


def build_portal_tree(grid: GridGraph) -> list[tuple[Cell, Cell]]:
    edges = portal_tree_edges(grid)
    check_acyclic(grid.nodes, edges)
    return edges


def tree_from_edges(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = {v: [] for v in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return {v: sorted(nbs) for v, nbs in sorted(adj.items())}


def grid_tree(grid: GridGraph, vids: Mapping[Cell, int]):
    """Portal tree over virtual ids plus each node's vertical tree neighbours."""
    edges = build_portal_tree(grid)
    tree = tree_from_edges(vids.values(), [(vids[a], vids[b]) for a, b in edges])
    vertical = {}
    for g in grid.nodes:
        vertical[vids[g]] = frozenset(
            vids[nb] for d in "NS" if (nb := grid.neighbor(g, d)) is not None
        )
    return tree, vertical


# -- oracles -----------------------------------------------------------------

@dataclass
class Rooted:
    root: int
    parent: dict[int, int | None]

    def children(self, tree: Tree) -> dict[int, list[int]]:
        return {v: [u for u in tree[v] if u != self.parent[v]] for v in tree}


def root_oracle(tree: Tree) -> Rooted:
    root = min(tree)
    parent: dict[int, int | None] = {root: None}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u in tree[v]:
            if u not in parent:
                parent[u] = v
                queue.append(u)
    if len(parent) != len(tree):
        raise LabelError("tree is not connected")
    return Rooted(root, dict(sorted(parent.items())))


def visit_order(tree: Tree, v: int, parent: int | None) -> list[int]:
    """Children of ``v`` in tour order: cyclically after the parent, ascending."""
    nbs = list(tree[v])
    if parent is None:
        return nbs
    k = nbs.index(parent)
    return nbs[k + 1:] + nbs[:k]


def dfs_oracle(tree: Tree, rooted: Rooted) -> dict[int, int]:
    order: dict[int, int] = {}
    stack = [rooted.root]
    while stack:
        v = stack.pop()
        order[v] = len(order) + 1
        stack.extend(reversed(visit_order(tree, v, rooted.parent[v])))
    return dict(sorted(order.items()))


def max_preorder_oracle(tree: Tree, rooted: Rooted, l: Mapping[int, int]) -> dict[int, int]:
    r = dict(l)
    by_l = sorted(tree, key=lambda v: -l[v])
    for v in by_l:
        p = rooted.parent[v]
        if p is not None:
            r[p] = max(r[p], r[v])
    return dict(sorted(r.items()))


def portal_components(tree: Tree, vertical: Mapping[int, Iterable[int]]) -> list[list[int]]:
    seen: set[int] = set()
    comps = []
    for v in sorted(tree):
        if v in seen:
            continue
        comp = [v]
        seen.add(v)
        k = 0
        while k < len(comp):
            for u in vertical.get(comp[k], ()):
                if u not in seen:
                    seen.add(u)
                    comp.append(u)
            k += 1
        comps.append(sorted(comp))
    return comps


def portal_label_oracle(
    tree: Tree, vertical: Mapping[int, Iterable[int]], rooted: Rooted, intervals: Mapping[int, Interval]
) -> dict[int, Interval]:
    out = {}
    for comp in portal_components(tree, vertical):
        members = set(comp)
        tops = [v for v in comp if rooted.parent[v] not in members]
        if len(tops) != 1:
            raise LabelError(f"portal {comp[:4]} has {len(tops)} top members")
        for v in comp:
            out[v] = intervals[tops[0]]
    return dict(sorted(out.items()))


@dataclass
class Labelling:
    rooted: Rooted
    l: dict[int, int]
    r: dict[int, int]
    portal: dict[int, Interval]

    def interval(self, v: int) -> Interval:
        return Interval(self.l[v], self.r[v])

    def labels(self) -> dict[int, GridLabel]:
        return {v: GridLabel(self.interval(v), self.portal[v]) for v in sorted(self.l)}


def label_oracle(tree: Tree, vertical: Mapping[int, Iterable[int]]) -> Labelling:
    rooted = root_oracle(tree)
    l = dfs_oracle(tree, rooted)
    r = max_preorder_oracle(tree, rooted, l)
    iv = {v: Interval(l[v], r[v]) for v in l}
    return Labelling(rooted, l, r, portal_label_oracle(tree, vertical, rooted, iv))


def parenthesis_violations(tree: Tree, lab: Labelling) -> list[str]:
    """Every child interval strictly nested in its parent's; branches disjoint."""
    bad = []
    n = len(tree)
    if sorted(lab.l.values()) != list(range(1, n + 1)):
        bad.append("preorder numbers are not a permutation of 1..n")
    if lab.r.get(lab.rooted.root) != n:
        bad.append("root interval does not end at n")
    for v, p in lab.rooted.parent.items():
        if p is not None and not lab.interval(p).strictly_contains(lab.interval(v)):
            bad.append(f"child {v} not nested in parent {p}")
    children = lab.rooted.children(tree)
    for v, kids in children.items():
        ivs = sorted(lab.interval(k) for k in kids)
        for a, b in zip(ivs, ivs[1:]):
            if a.r >= b.l:
                bad.append(f"sibling intervals {a} and {b} under {v} overlap")
    return bad


# -- distributed stages --------------------------------------------------------

ROUND_C, ROUND_C0 = 12, 20


def round_bound(n: int) -> float:
    """Calibrated ceiling on grid rounds per labelling stage."""
    return ROUND_C * math.log2(max(n, 2)) + ROUND_C0


class StepProgram:
    """Grid-level program that acts once per superstep of ``S`` rounds.

    Local records are sent in the first round of a superstep; global ones
    are spread over its rounds, at most ``cap`` messages per round.
    Records addressed to the node itself are handed back at the next step.
    """

    def __init__(self, vid: int, t0: int, S: int, cap: int):
        self.vid = vid
        self.t0 = t0
        self.S = S
        self.cap = cap
        self.done = False
        self.acc: list = []
        self.loopback: list = []
        self.out_local: dict[int, list[tuple]] = {}
        self.out_global: dict[int, list[tuple]] = {}
        #: leading steps that only talk locally and last a single round
        self.lead = 0

    def _phase(self, rel: int) -> tuple[int, bool, bool]:
        """(step index, starts a step, ends a step) for a relative round."""
        if rel < self.lead:
            return rel, True, True
        k, r = divmod(rel - self.lead, self.S)
        return self.lead + k, r == 0, r == self.S - 1

    def idle(self) -> bool:
        return self.done and not self.acc and not self.out_local and not self.out_global

    def post(self, dst: int, rec: tuple, local: bool = False) -> None:
        if dst == self.vid:
            self.loopback.append(rec)
        elif local:
            self.out_local.setdefault(dst, []).append(rec)
        else:
            self.out_global.setdefault(dst, []).append(rec)

    def step(self, k: int, records: list[tuple], senders: list[int]) -> None:
        raise NotImplementedError

    def on_round(self, ctx, inbox) -> None:
        self.acc.extend(inbox)
        k, starts, ends = self._phase(ctx.round - self.t0)
        if starts:
            recs, senders = [], []
            for rec in self.loopback:
                recs.append(rec)
                senders.append(self.vid)
            self.loopback = []
            for msg in self.acc:
                for rec in msg.records:
                    recs.append(rec)
                    senders.append(msg.src)
            self.acc = []
            if not self.done:
                self.step(k, recs, senders)
            for dst in sorted(self.out_local):
                ctx.send(dst, *self.out_local[dst])
            self.out_local = {}
        sent = 0
        while self.out_global and sent < self.cap:
            dst = min(self.out_global)
            ctx.send_global(dst, *self.out_global.pop(dst))
            sent += 1
        if self.out_global and ends:
            raise LabelError(f"node {self.vid} could not flush its superstep")


def superstep(max_sends: int, cap: int) -> int:
    return max(1, math.ceil(max_sends / cap))


def run_stage(runner, programs: Mapping[int, StepProgram], limit: int) -> int:
    def quiet(net) -> bool:
        return not net.pending and all(p.idle() for p in programs.values())

    _, rounds = runner.run_until(programs, quiet, limit)
    return rounds


def _limit(n: int) -> int:
    return int(4 * round_bound(n)) + 50


class PortalTreeProgram(StepProgram):
    """Two local rounds: learn the south neighbour's west bit, then link west."""

    def __init__(self, vid: int, nbr: Mapping[str, int], t0: int):
        super().__init__(vid, t0, 1, 1)
        self.nbr = dict(nbr)
        self.tree: set[int] = {nbr[d] for d in "NS" if d in nbr}

    def step(self, k, records, senders):
        if k == 0:
            if "N" in self.nbr:
                self.post(self.nbr["N"], (0, int("W" in self.nbr)), local=True)
            if "S" not in self.nbr:
                self._decide(False)
        for rec, src in zip(records, senders):
            if rec[0] == 0 and src == self.nbr.get("S"):
                self._decide(bool(rec[1]))
            elif rec[0] == 1 and src == self.nbr.get("E"):
                self.tree.add(src)
        if k == 2:
            self.done = True

    def _decide(self, south_has_west: bool) -> None:
        if "W" in self.nbr and not south_has_west:
            self.tree.add(self.nbr["W"])
            self.post(self.nbr["W"], (1, 1), local=True)


def run_portal_tree(runner, grid: GridGraph, vids: Mapping[Cell, int]):
    """Distributed portal tree; returns (tree adjacency, vertical map, rounds)."""
    t0 = runner.round
    programs = {}
    for g in grid.nodes:
        nbr = {d: vids[nb] for d in "NSEW" if (nb := grid.neighbor(g, d)) is not None}
        programs[vids[g]] = PortalTreeProgram(vids[g], nbr, t0)
    rounds = run_stage(runner, programs, 10)
    edges = {(min(v, u), max(v, u)) for v, p in programs.items() for u in p.tree}
    check_acyclic(programs, sorted(edges))
    tree = {v: sorted(p.tree) for v, p in sorted(programs.items())}
    vertical = {v: frozenset(p.nbr[d] for d in "NS" if d in p.nbr) for v, p in programs.items()}
    return tree, vertical, rounds


# Pointer jumping --------------------------------------------------------------

def pointer_jump(line: Sequence[int]) -> tuple[dict[int, set[int]], int]:
    """Doubling shortcuts on a line; returns (adjacency with shortcuts, rounds).

    In round j every node joins its 2^j-th predecessor and successor, which
    it learns from its 2^(j-1)-th ones; ceil(log2 k) rounds suffice.
    """
    k = len(line)
    adj: dict[int, set[int]] = {v: set() for v in line}
    for a, b in zip(line, line[1:]):
        adj[a].add(b)
        adj[b].add(a)
    left = {v: (line[i - 1] if i else None) for i, v in enumerate(line)}
    right = {v: (line[i + 1] if i + 1 < k else None) for i, v in enumerate(line)}
    rounds = 0
    while (1 << (rounds + 1)) < k:
        # both ends of a new shortcut learn it through the middle node
        left = {v: (left[u] if u is not None else None) for v, u in left.items()}
        right = {v: (right[u] if u is not None else None) for v, u in right.items()}
        for v, u in right.items():
            if u is not None:
                adj[v].add(u)
                adj[u].add(v)
        rounds += 1
    return adj, rounds


# Euler tour ------------------------------------------------------------------

_B = -1  # broadcast record code; doubling codes are 2j (down) and 2j + 1 (up)


@dataclass
class TourState:
    """What a tree node knows about its tour nodes once the tree is rooted."""

    nbrs: list[int]
    pos: list[int]
    m: int
    nxt: list[list[SubId]]
    parent: int | None
    is_root: bool

    @property
    def first(self) -> int:
        return min(range(len(self.pos)), key=self.pos.__getitem__)


class RootProgram(StepProgram):
    """Root the tree at its minimum id with an Euler-tour cycle.

    Tour node ``i`` of ``v`` is the arc entering ``v`` from its ``i``-th
    smallest neighbour; its successor leaves towards neighbour ``i + 1``.
    Window minima doubled along the cycle let the minimum tour node see its
    own key come back, which also reveals the cycle length ``m``.  It then
    starts a binomial broadcast that hands every tour node its offset.
    """

    def __init__(self, vid: int, nbrs: Sequence[int], t0: int, S: int, cap: int):
        super().__init__(vid, t0, S, cap)
        self.nbrs = sorted(nbrs)
        d = self.d = len(self.nbrs)
        self.key = [SubId(vid * SUB_BASE + i) for i in range(d)]
        self.nxt: list[list[SubId]] = [[] for _ in range(d)]
        self.prv: list[list[SubId]] = [[] for _ in range(d)]
        self.best: list[tuple[int, int]] = [(int(k), 0) for k in self.key]
        self.doubling = [True] * d
        self.pos: list[int | None] = [None] * d
        self.span = [0] * d
        self.m = 0
        self.is_root = False
        self.state: TourState | None = None
        self.lead = 1

    def step(self, k, records, senders):
        if k == 0:
            if self.d == 0:
                self.is_root = True
                self.state = TourState([], [], 0, [], None, True)
                self.done = True
                return
            for j, u in enumerate(self.nbrs):
                self.post(u, (j, self.d), local=True)
            return
        if k == 1:
            told = {src: rec for rec, src in zip(records, senders)}
            for i in range(self.d):
                u = self.nbrs[(i + 1) % self.d]
                w = self.nbrs[i]
                ju, _ = told[u]
                jw, dw = told[w]
                self.nxt[i].append(SubId(u * SUB_BASE + ju))
                self.prv[i].append(SubId(w * SUB_BASE + (jw - 1) % dw))
        else:
            self._absorb(records)
        self._emit()
        if all(p is not None for p in self.pos) and all(s == 1 for s in self.span):
            first = min(range(self.d), key=self.pos.__getitem__)
            parent = None if self.is_root else self.nbrs[first]
            self.state = TourState(
                self.nbrs, list(self.pos), self.m, [list(n) for n in self.nxt], parent, self.is_root
            )
            self.done = True

    def _absorb(self, records) -> None:
        for rec in records:
            code, dst = rec[0], rec[1]
            i = int(dst) % SUB_BASE
            if code == _B:
                _, _, pos, span, m = rec
                self.pos[i], self.span[i], self.m = pos, span, m
                self.doubling[i] = False
                continue
            if not self.doubling[i]:
                continue
            j, up = divmod(code, 2)
            if up:
                if len(self.prv[i]) == j + 1:
                    self.prv[i].append(rec[2])
                continue
            _, _, ptr, key, off = rec
            if len(self.nxt[i]) == j + 1:
                self.nxt[i].append(ptr)
            self.best[i] = min(self.best[i], (key, off + (1 << j)))
            if key == int(self.key[i]) and self.best[i][0] == key:
                # the minimum tour node: its key went all the way round
                self.m = off + (1 << j)
                self.is_root = True
                z = self.d - 1
                self.pos[z], self.span[z] = 0, self.m
                for t in range(self.d):
                    self.doubling[t] = False

    def _emit(self) -> None:
        for i in range(self.d):
            if self.pos[i] is not None:
                span = self.span[i]
                if span > 1:
                    lvl = (span - 1).bit_length() - 1
                    jump = 1 << lvl
                    self.post(self.nxt[i][lvl].vid, (_B, self.nxt[i][lvl], self.pos[i] + jump, span - jump, self.m))
                    self.span[i] = jump
                continue
            if not self.doubling[i]:
                continue
            j = len(self.nxt[i]) - 1
            if len(self.prv[i]) != j + 1:
                self.doubling[i] = False
                continue
            nx, pv = self.nxt[i][j], self.prv[i][j]
            key, off = self.best[i]
            self.post(pv.vid, (2 * j, pv, nx, key, off))
            self.post(nx.vid, (2 * j + 1, nx, pv))


class DfsProgram(StepProgram):
    """Preorder numbers as prefix counts of first visits along the tour line."""

    def __init__(self, vid: int, tour: TourState, t0: int, S: int, cap: int):
        super().__init__(vid, t0, S, cap)
        self.tour = tour
        d = len(tour.pos)
        self.count = [0] * d
        if d:
            self.count[tour.first] = 1
        self.levels = (tour.m - 1).bit_length() if tour.m > 1 else 0
        self.l: int | None = None

    def step(self, k, records, senders):
        tour = self.tour
        if not tour.pos:
            self.l = 1
            self.done = True
            return
        for rec in records:
            self.count[int(rec[1]) % SUB_BASE] += rec[2]
        if k >= self.levels:
            self.l = self.count[tour.first]
            self.done = True
            return
        jump = 1 << k
        for i, p in enumerate(tour.pos):
            if p + jump < tour.m:
                dst = tour.nxt[i][k]
                self.post(dst.vid, (k, dst, self.count[i]))


_DONE, _PTR, _UP, _HELLO, _LAST = 0, 1, 2, 3, 4


class ChainProgram(StepProgram):
    """Pointer jumping towards chain ends, carrying the end's value back.

    ``ptr`` is the next node on the chain (None at the end), ``ups`` the
    nodes whose pointer targets this node.  With ``last_child`` set, a
    two-step preamble first builds the chains: every node reports its
    preorder number to its parent, which points at its largest child.
    """

    def __init__(
        self,
        vid: int,
        t0: int,
        S: int,
        cap: int,
        *,
        ptr: int | None = None,
        ups: Iterable[int] = (),
        value: tuple = (),
        last_child: tuple[int | None, Iterable[int]] | None = None,
    ):
        super().__init__(vid, t0, S, cap)
        self.ptr = ptr
        self.ups = sorted(ups)
        self.value = tuple(value)
        self.preamble = last_child
        self.start = self.lead = 2 if last_child is not None else 0

    def step(self, k, records, senders):
        if k < self.start:
            self._preamble(k, records, senders)
            return
        first = k == self.start
        ups = list(self.ups) if first else []
        for rec in records:
            code = rec[0]
            if code == _DONE:
                self.ptr = None
                self.value = tuple(rec[1:])
            elif code == _PTR:
                self.ptr = int(rec[1])
            elif code == _UP:
                ups.append(int(rec[1]))
            elif code == _LAST:
                ups.append(int(rec[1]))
        for x in sorted(ups):
            if self.ptr is None:
                self.post(x, (_DONE, *self.value))
            else:
                self.post(x, (_PTR, VirtualId(self.ptr)))
                self.post(self.ptr, (_UP, VirtualId(x)))
        self.ups = []
        # whoever still points here is among the ups just served
        if self.ptr is None and not ups:
            self.done = True

    def _preamble(self, k, records, senders) -> None:
        parent, children = self.preamble
        if k == 0:
            if parent is not None:
                self.post(parent, (_HELLO, self.value[0]), local=True)
            return
        got = {src: rec[1] for rec, src in zip(records, senders) if rec[0] == _HELLO}
        kids = [c for c in children if c in got]
        if len(kids) != len(list(children)):
            raise LabelError(f"node {self.vid} did not hear from all children")
        if kids:
            last = max(kids, key=got.__getitem__)
            self.ptr = last
            self.post(last, (_LAST, VirtualId(self.vid)), local=True)
        self.ups = []


@dataclass
class StageRounds:
    portal_tree: int = 0
    root: int = 0
    dfs: int = 0
    max_preorder: int = 0
    portal_label: int = 0
    exchange: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def _cap(runner) -> int:
    net = getattr(runner, "vnet", runner)
    return net.global_cap


def run_root(runner, tree: Tree) -> tuple[dict[int, TourState], int]:
    cap = _cap(runner)
    t0 = runner.round
    S = superstep(2 * SUB_BASE, cap)
    programs = {v: RootProgram(v, tree[v], t0, S, cap) for v in tree}
    rounds = run_stage(runner, programs, _limit(len(tree)))
    return {v: p.state for v, p in programs.items()}, rounds


def run_dfs(runner, tours: Mapping[int, TourState]) -> tuple[dict[int, int], int]:
    cap = _cap(runner)
    t0 = runner.round
    S = superstep(SUB_BASE, cap)
    programs = {v: DfsProgram(v, t, t0, S, cap) for v, t in tours.items()}
    rounds = run_stage(runner, programs, _limit(len(tours)))
    return {v: p.l for v, p in sorted(programs.items())}, rounds


def run_max_preorder(runner, tours: Mapping[int, TourState], l: Mapping[int, int]):
    cap = _cap(runner)
    t0 = runner.round
    S = superstep(4, cap)
    programs = {}
    for v, t in tours.items():
        kids = [u for u in t.nbrs if u != t.parent]
        programs[v] = ChainProgram(v, t0, S, cap, value=(l[v],), last_child=(t.parent, kids))
    rounds = run_stage(runner, programs, _limit(len(tours)))
    return {v: p.value[0] for v, p in sorted(programs.items())}, rounds


def run_portal_labels(runner, tours, vertical, intervals: Mapping[int, Interval]):
    cap = _cap(runner)
    t0 = runner.round
    S = superstep(4, cap)
    programs = {}
    for v, t in tours.items():
        vert = set(vertical.get(v, ()))
        ptr = t.parent if t.parent in vert else None
        ups = [u for u in t.nbrs if u in vert and u != t.parent]
        iv = intervals[v]
        programs[v] = ChainProgram(v, t0, S, cap, ptr=ptr, ups=ups, value=(iv.l, iv.r))
    rounds = run_stage(runner, programs, _limit(len(tours)))
    return {v: Interval(*p.value) for v, p in sorted(programs.items())}, rounds


class ExchangeProgram(StepProgram):
    """One local round: tell every grid neighbour this node's two intervals."""

    def __init__(self, vid: int, nbr: Mapping[str, int], label: GridLabel, t0: int):
        super().__init__(vid, t0, 1, 1)
        self.nbr = dict(nbr)
        self.label = label
        self.heard: dict[str, GridLabel] = {}

    def step(self, k, records, senders):
        if k == 0:
            own, portal = self.label.own, self.label.portal
            for d in sorted(self.nbr):
                self.post(self.nbr[d], (own.l, own.r, portal.l, portal.r), local=True)
            return
        back = {u: d for d, u in self.nbr.items()}
        for rec, src in zip(records, senders):
            self.heard[back[src]] = GridLabel(Interval(rec[0], rec[1]), Interval(rec[2], rec[3]))
        self.done = True


def run_labelling(runner, tree: Tree, vertical: Mapping[int, Iterable[int]], rounds: StageRounds | None = None):
    """Root, number and label a tree distributedly; returns (labelling, rounds)."""
    rounds = rounds or StageRounds()
    tours, rounds.root = run_root(runner, tree)
    l, rounds.dfs = run_dfs(runner, tours)
    r, rounds.max_preorder = run_max_preorder(runner, tours, l)
    iv = {v: Interval(l[v], r[v]) for v in l}
    portal, rounds.portal_label = run_portal_labels(runner, tours, vertical, iv)
    roots = [v for v, t in tours.items() if t.is_root]
    if len(roots) != 1:
        raise LabelError(f"rooting elected {len(roots)} roots")
    rooted = Rooted(roots[0], {v: t.parent for v, t in sorted(tours.items())})
    return Labelling(rooted, dict(sorted(l.items())), dict(sorted(r.items())), portal), rounds


def label_grid(runner, grid: GridGraph, vids: Mapping[Cell, int]):
    """Full distributed labelling of a grid graph.

    Returns (tree, vertical, labelling, neighbour labels, stage rounds); the
    neighbour labels map each virtual id to direction -> GridLabel.
    """
    rounds = StageRounds()
    tree, vertical, rounds.portal_tree = run_portal_tree(runner, grid, vids)
    lab, rounds = run_labelling(runner, tree, vertical, rounds)
    labels = lab.labels()
    t0 = runner.round
    programs = {}
    for g in grid.nodes:
        nbr = {d: vids[nb] for d in "NSEW" if (nb := grid.neighbor(g, d)) is not None}
        programs[vids[g]] = ExchangeProgram(vids[g], nbr, labels[vids[g]], t0)
    rounds.exchange = run_stage(runner, programs, 10)
    heard = {v: p.heard for v, p in sorted(programs.items())}
    return tree, vertical, lab, heard, rounds
