"""The whole preprocessing pipeline on one instance, plus routing on its result."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..geometry import ActiveCellMap, Cell, UdgInstance, compute_active_cells
from ..grid import GridAdapter, GridGraph, Representation, make_grid_net, run_Ag, run_Br
from ..labelling import GridLabel, Labelling, label_grid
from ..routing import GridNodeState, NodeState, RoutingLabel, make_label, node_states, route_in_network, route_udg
from ..sim import Mode, SimNetwork

TRANSPORTS = ("direct", "adapter")


@dataclass
class Pipeline:
    udg: UdgInstance
    cells: ActiveCellMap
    grid: GridGraph
    R: Representation
    tree: dict[int, list[int]]
    vertical: dict[int, frozenset[int]]
    labelling: Labelling
    labels: dict[Cell, GridLabel]
    gstates: dict[Cell, GridNodeState]
    nodes: dict[int, NodeState]
    rounds: dict[str, int]
    udg_net: SimNetwork
    grid_net: SimNetwork
    mode: Mode = Mode.CONGEST
    extra: dict = field(default_factory=dict)

    def label(self, v: int) -> RoutingLabel:
        return make_label(v, self.udg, self.R, self.labels)

    def route(self, s: int, t: int) -> list[int]:
        return route_udg(self.nodes, s, self.label(t))

    def route_simulated(self, s: int, t: int) -> list[int]:
        """Route through a fresh UDG network in this pipeline's mode."""
        net = SimNetwork(self.udg.adj, mode=self.mode, track_knowledge=False)
        return route_in_network(net, self.nodes, s, self.label(t))

    def budget_ok(self) -> bool:
        for net in (self.udg_net, self.grid_net):
            tot = net.metrics_summary()["totals"]
            if tot["max_edge_load"] > 1 or tot["max_global_per_node"] > net.global_cap:
                return False
        return True


def build_pipeline(
    udg: UdgInstance,
    *,
    mode: Mode | str = Mode.CONGEST,
    transport: str = "direct",
    trace: bool = False,
    gamma: float = 1.0,
) -> Pipeline:
    """Elect, represent, label and derive the routing state of every node.

    ``transport`` selects how grid rounds run: ``direct`` on a network over
    virtual ids, ``adapter`` on the UDG itself through a :class:`GridAdapter`.
    """
    if transport not in TRANSPORTS:
        raise ValueError(f"unknown transport {transport!r}")
    mode = Mode(mode)
    cells = compute_active_cells(udg)
    # UDG-level knowledge only matters when grid traffic rides on the UDG
    net = SimNetwork(udg.adj, mode=mode, gamma=gamma, trace=trace, track_knowledge=transport == "adapter")
    reps = run_Ag(net, udg)
    elect = net.round
    R = run_Br(net, udg, reps)
    grid = GridGraph.from_cells(reps)
    rounds = {"elect": elect, "represent": net.round - elect}
    if transport == "adapter":
        runner = GridAdapter(net, grid, R, gamma=gamma, trace=trace)
        grid_net = runner.vnet
    else:
        runner = grid_net = make_grid_net(grid, R, gamma=gamma, trace=trace)
    tree, vertical, lab, heard, stages = label_grid(runner, grid, R.virtual_ids)
    rounds.update(stages.as_dict())
    rounds["labelling"] = sum(stages.as_dict().values())
    extra = {}
    if transport == "adapter":
        rounds["labelling_udg"] = sum(runner.udg_rounds)
        extra["udg_rounds"] = list(runner.udg_rounds)
    cell_of_vid = R.cell_of_vid()
    by_vid = lab.labels()
    labels = {cell_of_vid[v]: gl for v, gl in sorted(by_vid.items(), key=lambda kv: cell_of_vid[kv[0]])}
    gstates = {
        cell_of_vid[v]: GridNodeState(by_vid[v], dict(sorted(heard[v].items())))
        for v in sorted(by_vid, key=cell_of_vid.get)
    }
    nodes = node_states(udg, R, gstates)
    return Pipeline(
        udg, cells, grid, R, tree, vertical, lab, labels, gstates, nodes, rounds, net, grid_net, mode, extra
    )


def grid_labels(p: Pipeline) -> Mapping[Cell, GridLabel]:
    return p.labels
