from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybroute.sim import (
    BroadcastViolation,
    BudgetExceeded,
    Id,
    Mode,
    OversizedPayload,
    RoundLimitExceeded,
    SimError,
    SimNetwork,
    UnknownDestination,
    metrics_by_round,
    metrics_from_trace,
)


def path_adj(k):
    return {i: [j for j in (i - 1, i + 1) if 0 <= j < k] for i in range(k)}


class Scripted:
    """Runs ``fn(ctx, inbox)`` once per round; idle once ``done`` is set."""

    def __init__(self, fn):
        self.fn = fn
        self.seen = []
        self.done = False

    def on_round(self, ctx, inbox):
        self.seen.append(list(inbox))
        if not ctx.final:
            self.fn(self, ctx, inbox)

    def idle(self):
        return self.done


def once(fn):
    def step(prog, ctx, inbox):
        if ctx.round == 0:
            fn(ctx)
        prog.done = True
    return step


def test_two_node_hello():
    net = SimNetwork(path_adj(2))
    progs = {u: Scripted(once(lambda ctx: ctx.send(1 - ctx.node, ("hello",)))) for u in (0, 1)}
    net.run_round(progs)
    net.finish(progs)
    for u in (0, 1):
        assert [m.src for m in progs[u].seen[-1]] == [1 - u]


def test_global_cap_at_sixteen_nodes():
    adj = {i: [] for i in range(16)}
    net = SimNetwork(adj, track_knowledge=False)
    assert net.global_cap == 4
    progs = {0: Scripted(once(lambda ctx: [ctx.send_global(d, (1,)) for d in range(1, 6)]))}
    with pytest.raises(BudgetExceeded):
        net.run_round(progs)


def test_cap_scales_with_gamma():
    assert SimNetwork({i: [] for i in range(16)}, gamma=2.5).global_cap == 10


def test_broadcast_mode_rejects_second_payload():
    net = SimNetwork(path_adj(3), mode=Mode.BROADCAST)
    progs = {1: Scripted(once(lambda ctx: (ctx.broadcast((1,)), ctx.broadcast((2,)))))}
    with pytest.raises(BroadcastViolation):
        net.run_round(progs)


def test_broadcast_mode_rejects_unicast():
    net = SimNetwork(path_adj(3), mode="broadcast")
    with pytest.raises(BroadcastViolation):
        net.run_round({1: Scripted(once(lambda ctx: ctx.send(0, (1,))))})


def test_congest_rejects_second_message_on_edge():
    net = SimNetwork(path_adj(2))
    with pytest.raises(BudgetExceeded):
        net.run_round({0: Scripted(once(lambda ctx: (ctx.send(1, (1,)), ctx.send(1, (2,)))))})


def test_global_needs_known_destination():
    net = SimNetwork(path_adj(4))
    with pytest.raises(UnknownDestination):
        net.run_round({0: Scripted(once(lambda ctx: ctx.send_global(3, (1,))))})


def test_ids_in_payload_become_known():
    net = SimNetwork(path_adj(4))
    progs = {1: Scripted(once(lambda ctx: ctx.send(0, (Id(3),))))}
    net.run_round(progs)
    assert 3 in net.knowledge[0]
    # the next round may address node 3 globally
    p = Scripted(lambda prog, ctx, inbox: (ctx.send_global(3, (7,)), setattr(prog, "done", True)))
    net.run_round({0: p})
    assert 3 in net.inboxes and net.inboxes[3][0].src == 0


def test_oversized_payload():
    net = SimNetwork(path_adj(2), w_max=8)
    with pytest.raises(OversizedPayload):
        net.run_round({0: Scripted(once(lambda ctx: ctx.send(1, tuple(range(9)))))})


def test_run_until_immediate_stop():
    net = SimNetwork(path_adj(3))
    assert net.run_until({}, lambda n: True, limit=5) == (net, 0)


def test_run_until_limit():
    net = SimNetwork(path_adj(3))
    with pytest.raises(RoundLimitExceeded):
        net.run_until({}, lambda n: False, limit=10)


class Flood:
    def __init__(self, depth):
        self.depth = depth
        self.dist = None
        self.sent = False

    def on_round(self, ctx, inbox):
        if self.dist is None and inbox:
            self.dist = min(m.records[0][0] for m in inbox)
        if self.dist is not None and not self.sent and self.dist < self.depth and not ctx.final:
            ctx.broadcast((self.dist + 1,))
        self.sent = self.dist is not None

    def idle(self):
        return self.dist is None or self.sent


def test_depth_three_flood():
    net = SimNetwork(path_adj(6))
    progs = {u: Flood(3) for u in range(6)}
    progs[0].dist = 0

    def frontier_done(n):
        in_flight = [m.records[0][0] for box in n.inboxes.values() for m in box]
        return all(p.idle() for p in progs.values()) and all(d == 3 for d in in_flight)

    _, rounds = net.run_until(progs, frontier_done, 20)
    assert rounds == 3
    covered = {u for u, p in progs.items() if p.dist is not None} | {u for u, b in net.inboxes.items() if b}
    assert sorted(covered) == [0, 1, 2, 3]


def test_trace_header_only():
    net = SimNetwork(path_adj(2), trace=True)
    lines = net.trace_export()
    assert len(lines) == 1 and json.loads(lines[0])["ev"] == "header"


def test_trace_one_message():
    net = SimNetwork(path_adj(2), trace=True)
    net.run_round({0: Scripted(once(lambda ctx: ctx.send(1, (5,))))})
    evs = [json.loads(l) for l in net.trace_export()[1:]]
    assert [e["ev"] for e in evs] == ["send", "deliver"]
    assert evs[0] == {"round": 0, "ev": "send", "ch": "L", "src": 0, "dst": 1, "words": 1}
    assert evs[1]["round"] == 1


def test_trace_requires_tracing():
    with pytest.raises(SimError):
        SimNetwork(path_adj(2)).trace_export()


def _chatter(seed):
    net = SimNetwork(path_adj(8), trace=True)
    progs = {u: Flood(5) for u in range(8)}
    progs[seed % 8].dist = 0
    net.run_rounds(progs, 8)
    return net


def test_identical_runs_give_identical_traces():
    a, b = _chatter(3), _chatter(3)
    assert a.trace_export() == b.trace_export()
    assert a.metrics_summary() == b.metrics_summary()


def test_trace_replay_reproduces_metrics():
    net = _chatter(2)
    replay = metrics_from_trace(net.trace_export())
    live = metrics_by_round(net)
    for r, m in replay.items():
        for k in ("local_sends", "global_sends", "max_edge_load", "max_global_per_node"):
            assert m[k] == live[r][k]


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 11), st.integers(0, 10**6))
def test_conservation_and_mode_subsumption(k, src, seed):
    src %= k
    out = {}
    for mode in (Mode.BROADCAST, Mode.CONGEST):
        net = SimNetwork(path_adj(k), mode=mode, trace=True, shuffle_seed=seed)
        progs = {u: Flood(k) for u in range(k)}
        progs[src].dist = 0
        net.run_rounds(progs, k + 1)
        evs = [json.loads(l) for l in net.trace_export()[1:]]
        sends = sum(e["ev"] == "send" for e in evs)
        delivers = sum(e["ev"] == "deliver" for e in evs)
        assert sends == delivers
        out[mode] = {u: p.dist for u, p in progs.items()}
    assert out[Mode.BROADCAST] == out[Mode.CONGEST]
    assert out[Mode.CONGEST] == {u: abs(u - src) for u in range(k)}
