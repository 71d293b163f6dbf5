"""Round-synchronous HYBRID network simulator.

Local messages travel over the edges of a fixed graph under CONGEST or
Broadcast-CONGEST rules; global messages follow NCC0: a node may address any
node whose id it knows, at most ``ceil(gamma * log2 n)`` times per round.

Programs are objects with ``on_round(ctx, inbox)``; they emit messages via
the context.  Messages carry a bundle of records (several parallel
algorithm instances sharing an edge, combined into one message); each record
holds at most ``w_max`` words.
"""
from __future__ import annotations

import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

VID_BASE = 64
SUB_BASE = 4


class Channel(str, Enum):
    LOCAL = "L"
    GLOBAL = "G"


class Mode(str, Enum):
    CONGEST = "congest"
    BROADCAST = "broadcast"


class Id(int):
    """A word holding a node id; delivering it makes the id known."""

    __slots__ = ()

    def __repr__(self):
        return f"Id({int(self)})"


class VirtualId(int):
    """A word holding a virtual grid-node id ``host * 64 + i``.

    Delivering it makes the hosting node known.
    """

    __slots__ = ()

    @property
    def host(self) -> int:
        return int(self) // VID_BASE

    def __repr__(self):
        return f"VirtualId({int(self)})"


class SubId(int):
    """A word naming the ``i``-th sub-node of a grid node: ``vid * 4 + i``."""

    __slots__ = ()

    @property
    def vid(self) -> int:
        return int(self) // SUB_BASE

    def __repr__(self):
        return f"SubId({self.vid}:{int(self) % SUB_BASE})"


class SimError(RuntimeError):
    pass


class BudgetExceeded(SimError):
    pass


class BroadcastViolation(BudgetExceeded):
    pass


class UnknownDestination(SimError):
    pass


class OversizedPayload(SimError):
    pass


class RoundLimitExceeded(SimError):
    pass


Record = tuple


@dataclass(frozen=True, slots=True)
class Message:
    src: int
    dst: int
    channel: Channel
    records: tuple[Record, ...]
    seq: int = 0

    @property
    def words(self) -> int:
        return sum(len(r) for r in self.records)


def host_id(word) -> int | None:
    """Node made known by a payload word on the UDG, if any."""
    t = type(word)
    if t is Id:
        return int(word)
    if t is VirtualId:
        return word.host
    if t is SubId:
        return word.vid // VID_BASE
    return None


def grid_id_of(word) -> int | None:
    """Node made known by a payload word on the grid level, if any."""
    t = type(word)
    if t is VirtualId:
        return int(word)
    if t is SubId:
        return word.vid
    return None


def _ids_in(records: Iterable[Record], id_of: Callable[[Any], int | None]) -> frozenset[int]:
    out = set()
    for rec in records:
        for w in rec:
            if isinstance(w, int):
                k = id_of(w)
                if k is not None:
                    out.add(k)
    return frozenset(out)


class NodeProgram(Protocol):
    def on_round(self, ctx: "Context", inbox: Sequence[Message]) -> None: ...

    def idle(self) -> bool: ...


@dataclass
class RoundMetrics:
    round: int
    local_sends: int = 0
    global_sends: int = 0
    max_edge_load: int = 0
    max_global_per_node: int = 0
    max_bundle: int = 0

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "local_sends": self.local_sends,
            "global_sends": self.global_sends,
            "max_edge_load": self.max_edge_load,
            "max_global_per_node": self.max_global_per_node,
            "max_bundle": self.max_bundle,
        }


class Context:
    """Per-node handle passed to a program for one round."""

    __slots__ = ("net", "node", "round", "final", "_local_dsts", "_bcast", "_globals")

    def __init__(self, net: "SimNetwork", node: int, rnd: int, final: bool = False):
        self.net = net
        self.node = node
        self.round = rnd
        self.final = final
        self._local_dsts: set[int] = set()
        self._bcast = False
        self._globals = 0

    @property
    def neighbors(self) -> frozenset[int]:
        return self.net.adj[self.node]

    def knows(self, other: int) -> bool:
        return other in self.net.knowledge[self.node]

    def send(self, dst: int, *records: Record) -> None:
        """Local unicast (CONGEST only)."""
        self.net._emit(self, int(dst), Channel.LOCAL, records)

    def broadcast(self, *records: Record) -> None:
        """One identical local message to every neighbour."""
        self.net._emit_broadcast(self, records)

    def send_global(self, dst: int, *records: Record) -> None:
        self.net._emit(self, int(dst), Channel.GLOBAL, records)


class SimNetwork:
    """Mutable simulation state: inboxes, knowledge, budgets, metrics, trace."""

    def __init__(
        self,
        adj: Mapping[int, Iterable[int]],
        *,
        mode: Mode | str = Mode.CONGEST,
        gamma: float = 1.0,
        w_max: int = 8,
        bundle_cap: int = 1024,
        n_for_cap: int | None = None,
        trace: bool = False,
        shuffle_seed: int | None = None,
        track_knowledge: bool = True,
        id_of: Callable[[Any], int | None] = host_id,
    ):
        self.adj: dict[int, frozenset[int]] = {int(u): frozenset(int(v) for v in vs) for u, vs in adj.items()}
        self.ids = tuple(sorted(self.adj))
        self.mode = Mode(mode)
        self.gamma = gamma
        self.w_max = w_max
        self.bundle_cap = bundle_cap
        n = n_for_cap if n_for_cap is not None else len(self.ids)
        self.global_cap = max(1, math.ceil(gamma * math.log2(max(n, 2))))
        self.round = 0
        self.inboxes: dict[int, list[Message]] = defaultdict(list)
        self.track_knowledge = track_knowledge
        self.id_of = id_of
        self.knowledge: dict[int, set[int]] = (
            {u: {u, *self.adj[u]} for u in self.ids} if track_knowledge else {}
        )
        self.metrics: list[RoundMetrics] = []
        self.tracing = trace
        self.events: list[dict] = []
        self._rng = random.Random(shuffle_seed) if shuffle_seed is not None else None
        self._out: list[Message] = []
        self._seq = 0
        self._cur: RoundMetrics | None = None
        self._edge_load: dict[tuple[int, int], int] = {}
        if trace:
            self.events.append(self._header())

    def _header(self) -> dict:
        return {
            "ev": "header",
            "mode": self.mode.value,
            "n": len(self.ids),
            "gamma": self.gamma,
            "w_max": self.w_max,
            "global_cap": self.global_cap,
        }

    # -- emission ----------------------------------------------------------

    def _check_records(self, ctx: Context, dst: int, channel: Channel, records) -> tuple:
        records = tuple(tuple(r) for r in records)
        if not records:
            raise OversizedPayload("empty message")
        if len(records) > self.bundle_cap:
            self._reject(ctx.node, dst, channel, records)
            raise OversizedPayload(f"{len(records)} records exceed bundle cap {self.bundle_cap}")
        for r in records:
            if len(r) > self.w_max:
                self._reject(ctx.node, dst, channel, records)
                raise OversizedPayload(f"record of {len(r)} words exceeds w_max={self.w_max}")
        return records

    def _emit(self, ctx: Context, dst: int, channel: Channel, records) -> None:
        if ctx.final:
            raise SimError("no sends allowed while draining")
        records = self._check_records(ctx, dst, channel, records)
        src = ctx.node
        if channel is Channel.LOCAL:
            if self.mode is Mode.BROADCAST:
                self._reject(src, dst, channel, records)
                raise BroadcastViolation("unicast local send in Broadcast-CONGEST mode")
            if dst not in self.adj[src]:
                self._reject(src, dst, channel, records)
                raise UnknownDestination(f"{dst} is not a neighbour of {src}")
            if dst in ctx._local_dsts:
                self._reject(src, dst, channel, records)
                raise BudgetExceeded(f"second local message {src}->{dst} in round {self.round}")
            ctx._local_dsts.add(dst)
        else:
            if self.track_knowledge and dst not in self.knowledge[src]:
                self._reject(src, dst, channel, records)
                raise UnknownDestination(f"{src} does not know {dst}")
            if dst not in self.adj:
                raise UnknownDestination(f"no node {dst}")
            if ctx._globals >= self.global_cap:
                self._reject(src, dst, channel, records)
                raise BudgetExceeded(
                    f"node {src} exceeds global cap {self.global_cap} in round {self.round}"
                )
            ctx._globals += 1
        self._push(src, dst, channel, records)

    def _emit_broadcast(self, ctx: Context, records) -> None:
        if ctx.final:
            raise SimError("no sends allowed while draining")
        src = ctx.node
        records = self._check_records(ctx, -1, Channel.LOCAL, records)
        if ctx._bcast or (self.mode is Mode.CONGEST and ctx._local_dsts & self.adj[src]):
            self._reject(src, -1, Channel.LOCAL, records)
            if self.mode is Mode.BROADCAST:
                raise BroadcastViolation(f"node {src} emits two local payloads in round {self.round}")
            raise BudgetExceeded(f"node {src} overloads an edge in round {self.round}")
        ctx._bcast = True
        ctx._local_dsts.update(self.adj[src])
        for dst in sorted(self.adj[src]):
            self._push(src, dst, Channel.LOCAL, records)

    def _push(self, src: int, dst: int, channel: Channel, records) -> None:
        msg = Message(src, dst, channel, records, self._seq)
        self._seq += 1
        self._out.append(msg)
        m = self._cur
        if channel is Channel.LOCAL:
            m.local_sends += 1
            key = (src, dst)
            load = self._edge_load.get(key, 0) + 1
            self._edge_load[key] = load
            m.max_edge_load = max(m.max_edge_load, load)
        else:
            m.global_sends += 1
        m.max_bundle = max(m.max_bundle, len(records))
        if self.tracing:
            self.events.append(
                {"round": self.round, "ev": "send", "ch": channel.value, "src": src, "dst": dst, "words": msg.words}
            )

    def _reject(self, src, dst, channel, records) -> None:
        if self.tracing:
            self.events.append(
                {
                    "round": self.round,
                    "ev": "reject",
                    "ch": channel.value,
                    "src": src,
                    "dst": dst,
                    "words": sum(len(r) for r in records),
                }
            )

    # -- execution ---------------------------------------------------------

    def _inbox_for(self, u: int) -> list[Message]:
        box = self.inboxes.pop(u, None)
        if not box:
            return []
        box.sort(key=lambda m: (m.src, m.seq))
        if self._rng is not None:
            self._rng.shuffle(box)
        return box

    def run_round(
        self, programs: Mapping[int, NodeProgram], wake: Iterable[int] | None = None
    ) -> "SimNetwork":
        """Invoke every handler on its inbox, then deliver into next inboxes.

        Handlers of idle nodes with empty inboxes are skipped; an idle
        program must treat an empty round as a no-op.  ``wake`` restricts
        the scan to the given nodes plus those with pending mail.
        """
        self.begin_round()
        self.invoke(programs, wake)
        self._deliver()
        self.end_round()
        return self

    def begin_round(self) -> None:
        self._cur = RoundMetrics(self.round)
        self._edge_load = {}
        self._out = []

    def end_round(self) -> None:
        self.metrics.append(self._cur)
        self._cur = None
        self.round += 1

    def invoke(self, programs: Mapping[int, NodeProgram], wake: Iterable[int] | None = None) -> None:
        if wake is None:
            order = self.ids
        else:
            order = sorted(set(wake) | {u for u, box in self.inboxes.items() if box})
        per_node_global = 0
        for u in order:
            prog = programs.get(u)
            pending = bool(self.inboxes.get(u))
            if prog is None:
                if pending:
                    self.inboxes.pop(u)
                continue
            if not pending and prog.idle():
                continue
            ctx = Context(self, u, self.round)
            prog.on_round(ctx, self._inbox_for(u))
            per_node_global = max(per_node_global, ctx._globals)
        self._cur.max_global_per_node = max(self._cur.max_global_per_node, per_node_global)

    def take_outgoing(self) -> list[Message]:
        """Remove and return the messages emitted this round (for adapters)."""
        out, self._out = self._out, []
        return out

    def deliver(self, messages: Iterable[Message]) -> None:
        self._out = list(messages)
        self._deliver()

    def _deliver(self) -> None:
        ids_cache: dict[int, frozenset[int]] = {}
        for msg in self._out:
            self.inboxes[msg.dst].append(msg)
            if self.track_knowledge:
                key = id(msg.records)
                ids = ids_cache.get(key)
                if ids is None:
                    ids = ids_cache[key] = _ids_in(msg.records, self.id_of) | {msg.src}
                self.knowledge[msg.dst] |= ids
            if self.tracing:
                self.events.append(
                    {
                        "round": self.round + 1,
                        "ev": "deliver",
                        "ch": msg.channel.value,
                        "src": msg.src,
                        "dst": msg.dst,
                        "words": msg.words,
                    }
                )
        self._out = []

    def finish(self, programs: Mapping[int, NodeProgram]) -> None:
        """Let programs consume their last inboxes without sending."""
        for u in self.ids:
            if u in self.inboxes:
                prog = programs.get(u)
                box = self._inbox_for(u)
                if prog is not None:
                    prog.on_round(Context(self, u, self.round, final=True), box)

    def run_rounds(self, programs: Mapping[int, NodeProgram], k: int) -> int:
        for _ in range(k):
            self.run_round(programs)
        return k

    def run_until(
        self,
        programs: Mapping[int, NodeProgram],
        stop: Callable[["SimNetwork"], bool],
        limit: int,
    ) -> tuple["SimNetwork", int]:
        rounds = 0
        while not stop(self):
            if rounds >= limit:
                raise RoundLimitExceeded(f"stop condition not reached within {limit} rounds")
            self.run_round(programs)
            rounds += 1
        return self, rounds

    def advance(self, k: int) -> None:
        """Advance the clock by ``k`` rounds in which nothing happens."""
        for _ in range(k):
            self.metrics.append(RoundMetrics(self.round))
            self.round += 1

    @property
    def pending(self) -> bool:
        return any(self.inboxes.values())

    # -- export ------------------------------------------------------------

    def trace_export(self) -> list[str]:
        if not self.tracing:
            raise SimError("tracing was not enabled")
        return [json.dumps(ev, sort_keys=True, separators=(",", ":")) for ev in self.events]

    def metrics_summary(self) -> dict:
        return {
            "rounds": self.round,
            "global_cap": self.global_cap,
            "per_round": [m.as_dict() for m in self.metrics if m.local_sends or m.global_sends],
            "totals": {
                "local_sends": sum(m.local_sends for m in self.metrics),
                "global_sends": sum(m.global_sends for m in self.metrics),
                "max_edge_load": max((m.max_edge_load for m in self.metrics), default=0),
                "max_global_per_node": max((m.max_global_per_node for m in self.metrics), default=0),
            },
        }


def metrics_from_trace(lines: Iterable[str]) -> dict:
    """Recompute per-round send counters from a JSONL trace."""
    per: dict[int, dict] = {}
    load: dict[tuple, int] = defaultdict(int)
    glob: dict[tuple, int] = defaultdict(int)
    for line in lines:
        ev = json.loads(line)
        if ev.get("ev") != "send":
            continue
        r = ev["round"]
        m = per.setdefault(
            r,
            {"round": r, "local_sends": 0, "global_sends": 0, "max_edge_load": 0, "max_global_per_node": 0},
        )
        if ev["ch"] == "L":
            m["local_sends"] += 1
            load[(r, ev["src"], ev["dst"])] += 1
            m["max_edge_load"] = max(m["max_edge_load"], load[(r, ev["src"], ev["dst"])])
        else:
            m["global_sends"] += 1
            glob[(r, ev["src"])] += 1
            m["max_global_per_node"] = max(m["max_global_per_node"], glob[(r, ev["src"])])
    return {r: per[r] for r in sorted(per)}


def metrics_by_round(net: SimNetwork) -> dict:
    return {
        m.round: {
            "round": m.round,
            "local_sends": m.local_sends,
            "global_sends": m.global_sends,
            "max_edge_load": m.max_edge_load,
            "max_global_per_node": m.max_global_per_node,
        }
        for m in net.metrics
        if m.local_sends or m.global_sends
    }
