from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybroute.grid import GridGraph, make_grid_net, build_representation_oracle
from hybroute.labelling import (
    CycleDetected,
    GridLabel,
    Interval,
    build_portal_tree,
    check_acyclic,
    compute_portals,
    dfs_oracle,
    label_grid,
    label_oracle,
    max_preorder_oracle,
    parenthesis_violations,
    pointer_jump,
    portal_label_oracle,
    portal_tree_edges,
    root_oracle,
    round_bound,
    run_labelling,
    tree_from_edges,
)
from hybroute.sim import SimNetwork, grid_id_of
from hybroute.harness.oracles import bfs_distances

from conftest import instance, pipeline


def grid_of(cells):
    return GridGraph.from_cells(set(cells))


def tree_net(tree):
    return SimNetwork(tree, id_of=grid_id_of, w_max=5)


def random_tree(rng, n, max_deg=4):
    """Random tree on distinct ids with degree at most ``max_deg``."""
    ids = rng.sample(range(1, 20 * n + 1), n)
    edges, deg = [], {ids[0]: 0}
    for v in ids[1:]:
        u = rng.choice([w for w, d in deg.items() if d < max_deg])
        edges.append((u, v))
        deg[u] += 1
        deg[v] = 1
    return tree_from_edges(ids, edges)


# -- portals and the portal tree ----------------------------------------------

def test_portals_of_vertical_strip():
    assert compute_portals(grid_of((0, j) for j in range(5))) == [tuple((0, j) for j in range(4, -1, -1))]


def test_portals_of_horizontal_strip():
    assert compute_portals(grid_of((i, 0) for i in range(5))) == [((i, 0),) for i in range(5)]


def test_portals_of_block():
    block = grid_of((i, j) for i in range(2) for j in range(2))
    assert compute_portals(block) == [((0, 1), (0, 0)), ((1, 1), (1, 0))]


def test_block_tree_uses_southern_edge():
    block = grid_of((i, j) for i in range(2) for j in range(2))
    horizontal = [e for e in build_portal_tree(block) if e[0][1] == e[1][1]]
    assert horizontal == [((0, 0), (1, 0))]


def test_horizontal_strip_tree_is_a_path():
    edges = build_portal_tree(grid_of((i, 0) for i in range(5)))
    assert edges == [((i, 0), (i + 1, 0)) for i in range(4)]


def test_ring_has_a_cycle():
    ring = {(i, j) for i in range(3) for j in range(3)} - {(1, 1)}
    with pytest.raises(CycleDetected):
        build_portal_tree(grid_of(ring))


def test_check_acyclic_requires_spanning():
    with pytest.raises(CycleDetected):
        check_acyclic([1, 2, 3], [(1, 2)])


def test_one_horizontal_edge_per_adjacent_portal_pair():
    grid = pipeline(1, 300).grid
    where = {g: k for k, por in enumerate(compute_portals(grid)) for g in por}
    seen = {}
    for a, b in portal_tree_edges(grid):
        if where[a] != where[b]:
            key = frozenset((where[a], where[b]))
            assert key not in seen
            seen[key] = (a, b)
    adjacent = {frozenset((where[a], where[b])) for a, b in grid.edges if where[a] != where[b]}
    assert set(seen) == adjacent


# -- oracles on hand examples ---------------------------------------------------------

def test_rooting_a_path():
    tree = tree_from_edges([5, 7, 9], [(5, 7), (7, 9)])
    assert root_oracle(tree).parent == {5: None, 7: 5, 9: 7}


def test_rooting_a_star():
    tree = tree_from_edges([1, 2, 3, 4], [(1, 2), (1, 3), (1, 4)])
    assert root_oracle(tree).children(tree)[1] == [2, 3, 4]


def test_star_preorder():
    tree = tree_from_edges([1, 4, 6], [(1, 4), (1, 6)])
    rt = root_oracle(tree)
    l = dfs_oracle(tree, rt)
    assert l == {1: 1, 4: 2, 6: 3}
    assert max_preorder_oracle(tree, rt, l) == {1: 3, 4: 2, 6: 3}


def test_path_preorder():
    tree = tree_from_edges([1, 2, 3], [(1, 2), (2, 3)])
    rt = root_oracle(tree)
    l = dfs_oracle(tree, rt)
    assert l == {1: 1, 2: 2, 3: 3}
    assert max_preorder_oracle(tree, rt, l) == {1: 3, 2: 3, 3: 3}


def test_portal_labels_examples():
    tree = tree_from_edges([1, 2, 3], [(1, 2), (2, 3)])
    lab = label_oracle(tree, {1: {2}, 2: {1}, 3: set()})
    # portal {1, 2} holds the root; 3 is a singleton
    assert lab.portal[1] == lab.portal[2] == Interval(1, 3)
    assert lab.portal[3] == lab.interval(3)


def test_interval_relations():
    assert Interval(1, 5).strictly_contains(Interval(2, 3))
    assert Interval(1, 5).contains(Interval(1, 5))
    assert not Interval(1, 5).strictly_contains(Interval(1, 5))
    with pytest.raises(ValueError):
        Interval(3, 2)


# -- pointer jumping ------------------------------------------------------------------

def _diameter(adj):
    return max(max(bfs_distances(adj, s).values()) for s in adj)


@pytest.mark.parametrize("k", [1, 2, 3, 8, 33, 100])
def test_pointer_jump_bounds(k):
    line = list(range(100, 100 + k))
    adj, rounds = pointer_jump(line)
    lg = math.ceil(math.log2(k)) if k > 1 else 0
    assert rounds <= lg
    if k == 1:
        assert adj == {100: set()}
        return
    assert _diameter(adj) <= max(1, 2 * lg)
    for i, v in enumerate(line):
        base = sum(0 <= j < k for j in (i - 1, i + 1))
        assert len(adj[v]) - base <= 2 * lg
    if k == 2:
        assert _diameter(adj) == 1
    if k == 8:
        assert _diameter(adj) <= 6


# -- distributed against the oracles ----------------------------------------------------

def _check_against_oracle(tree, vertical=None):
    vertical = vertical if vertical is not None else {v: frozenset() for v in tree}
    lab, rounds = run_labelling(tree_net(tree), tree, vertical)
    ref = label_oracle(tree, vertical)
    assert lab.rooted.root == ref.rooted.root
    assert lab.rooted.parent == ref.rooted.parent
    assert lab.l == ref.l and lab.r == ref.r
    assert lab.portal == ref.portal
    assert parenthesis_violations(tree, lab) == []
    bound = round_bound(len(tree))
    for stage in ("root", "dfs", "max_preorder", "portal_label"):
        assert getattr(rounds, stage) <= bound
    return lab


def test_distributed_star_and_path():
    _check_against_oracle(tree_from_edges([3, 8, 9], [(3, 8), (3, 9)]))
    _check_against_oracle(tree_from_edges([2, 5, 11], [(2, 5), (5, 11)]))


def test_single_node_tree():
    lab = _check_against_oracle({7: []})
    assert lab.interval(7) == Interval(1, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10**9))
def test_distributed_matches_oracle_on_random_trees(n, seed):
    _check_against_oracle(random_tree(random.Random(seed), n))


def test_random_fifty_node_tree():
    _check_against_oracle(random_tree(random.Random(50), 50))


@pytest.mark.parametrize("seed,n", [(0, 100), (1, 300)])
def test_grid_labelling_matches_oracle(seed, n):
    p = pipeline(seed, n)
    ref = label_oracle(p.tree, p.vertical)
    assert p.labelling.l == ref.l and p.labelling.r == ref.r and p.labelling.portal == ref.portal
    assert p.labelling.rooted.root == min(p.R.virtual_ids.values())
    assert parenthesis_violations(p.tree, p.labelling) == []


@pytest.mark.parametrize("seed,n", [(0, 100), (2, 400)])
def test_adjacent_portals_nest(seed, n):
    p = pipeline(seed, n)
    for a, b in p.grid.edges:
        if a[1] == b[1]:
            pa, pb = p.labels[a].portal, p.labels[b].portal
            assert pa.strictly_contains(pb) or pb.strictly_contains(pa)


def test_portal_members_share_label():
    p = pipeline(1, 300)
    for por in compute_portals(p.grid):
        assert len({p.labels[g].portal for g in por}) == 1
        for g in por:
            assert p.labels[g].portal.contains(p.labels[g].own)


def test_neighbour_labels_exchanged():
    p = pipeline(0, 100)
    for g, st_ in p.gstates.items():
        for d, gl in st_.nbrs.items():
            assert gl == p.labels[p.grid.neighbor(g, d)]
        assert set(st_.nbrs) == {d for d in "NSEW" if p.grid.neighbor(g, d) is not None}


def test_label_grid_directly_on_grid_net():
    udg = instance(2, 120).udg()
    R = build_representation_oracle(udg)
    grid = GridGraph.from_cells(R.rep)
    net = make_grid_net(grid, R)
    tree, vertical, lab, heard, rounds = label_grid(net, grid, R.virtual_ids)
    assert rounds.portal_tree <= 5 and rounds.exchange <= 5
    assert lab.l == label_oracle(tree, vertical).l
    tot = net.metrics_summary()["totals"]
    assert tot["max_edge_load"] <= 1 and tot["max_global_per_node"] <= net.global_cap
