from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybroute.geometry import (
    C,
    EPS,
    CoincidentPoints,
    DuplicateId,
    build_udg,
    cell_box,
    cell_center,
    cell_of,
    compute_active_cells,
    enumerate_triangles,
    has_enclosed_inactive_region,
    local_candidacies,
    point_in_triangle,
    segment_distance,
    segment_intersects_cell,
    triangles_containing_point,
)
from hybroute.harness.oracles import bfs_distances

from conftest import instance


# -- independent oracles -------------------------------------------------------

def _cross(p, q, r):
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _seg_hits_seg(a, b, c, d):
    # proper or touching intersection, no tolerance
    d1, d2, d3, d4 = _cross(c, d, a), _cross(c, d, b), _cross(a, b, c), _cross(a, b, d)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True

    def on(p, q, r):
        return abs(_cross(p, q, r)) < 1e-12 and min(p[0], q[0]) - 1e-12 <= r[0] <= max(p[0], q[0]) + 1e-12 and min(p[1], q[1]) - 1e-12 <= r[1] <= max(p[1], q[1]) + 1e-12

    return on(c, d, a) or on(c, d, b) or on(a, b, c) or on(a, b, d)


def _in_box(p, box):
    x0, y0, x1, y1 = box
    return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


def _box_sides(box):
    x0, y0, x1, y1 = box
    cs = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return list(zip(cs, cs[1:] + cs[:1]))


def segment_box_oracle(a, b, box):
    return _in_box(a, box) or _in_box(b, box) or any(_seg_hits_seg(a, b, s, t) for s, t in _box_sides(box))


def triangle_box_oracle(tri, box):
    a, b, c = tri
    sides = [(a, b), (b, c), (c, a)]
    if any(segment_box_oracle(s, t, box) for s, t in sides):
        return True
    x0, y0, x1, y1 = box
    return any(point_in_triangle(p, a, b, c) for p in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)])


def active_oracle(udg):
    segs = [(udg.pos[u], udg.pos[v]) for u, v in udg.edges]
    tris = [[udg.pos[w] for w in t] for t in enumerate_triangles(udg)]
    xs = [p.x for p in udg.pos.values()]
    ys = [p.y for p in udg.pos.values()]
    out = set()
    for i in range(math.floor(min(xs) / C) - 1, math.floor(max(xs) / C) + 2):
        for j in range(math.floor(min(ys) / C) - 1, math.floor(max(ys) / C) + 2):
            box = cell_box((i, j))

            def near(pts):
                # cheap bounding-box rejection before the exact test
                return (
                    min(p[0] for p in pts) <= box[2] and max(p[0] for p in pts) >= box[0]
                    and min(p[1] for p in pts) <= box[3] and max(p[1] for p in pts) >= box[1]
                )

            if any(near((a, b)) and segment_box_oracle(a, b, box) for a, b in segs) or any(
                near(t) and triangle_box_oracle(t, box) for t in tris
            ):
                out.add((i, j))
    return out


# -- build_udg -----------------------------------------------------------------

def test_unit_distance_is_an_edge():
    assert build_udg([(0, (0, 0)), (1, (1.0, 0))]).edges == ((0, 1),)


def test_beyond_unit_distance_is_not_an_edge():
    assert build_udg([(0, (0, 0)), (1, (1.0 + 1e-6, 0))]).edges == ()


def test_three_close_nodes_form_a_triangle():
    h = 0.9 * math.sqrt(3) / 2
    udg = build_udg([(0, (0, 0)), (1, (0.9, 0)), (2, (0.45, h))])
    assert len(udg.edges) == 3
    assert enumerate_triangles(udg) == [(0, 1, 2)]


def test_duplicate_ids_and_points_rejected():
    with pytest.raises(DuplicateId):
        build_udg([(0, (0, 0)), (0, (0.5, 0))])
    with pytest.raises(CoincidentPoints):
        build_udg([(0, (0, 0)), (1, (0, 0))])


def test_connectivity_is_reported():
    assert not build_udg([(0, (0, 0)), (1, (3, 0))]).connected
    assert build_udg([(0, (0, 0)), (1, (0.5, 0))]).connected


# -- cells -----------------------------------------------------------------------

def test_cell_of_examples():
    assert cell_of((0, 0)) == (0, 0)
    assert cell_of((0.5, 0.5)) == (1, 1)
    assert cell_of((-0.1, 0.2)) == (-1, 0)


def test_cell_side_value():
    assert C == pytest.approx(0.3872983346207417)


def test_segment_cell_examples():
    cell = (2, 3)
    x0, y0, x1, y1 = cell_box(cell)
    mid = cell_center(cell)
    assert segment_intersects_cell((mid.x - 0.1, mid.y), (mid.x + 0.1, mid.y), cell)
    assert segment_intersects_cell((x0 - 1, mid.y), (x1 + 1, mid.y), cell)
    assert not segment_intersects_cell((x1 + 2 * C, y0), (x1 + 2 * C, y1), cell)


@settings(max_examples=300, deadline=None)
@given(
    st.tuples(st.floats(-3, 3), st.floats(-3, 3)),
    st.floats(0, 2 * math.pi),
    st.floats(0.01, 1.0),
    st.integers(-8, 8),
    st.integers(-8, 8),
)
def test_segment_predicate_matches_oracle(a, ang, length, i, j):
    b = (a[0] + length * math.cos(ang), a[1] + length * math.sin(ang))
    box = cell_box((i, j))
    got = segment_intersects_cell(a, b, (i, j))
    exact = segment_box_oracle(a, b, box)
    if got != exact:
        # only tolerance-band disagreements are allowed
        grown = (box[0] - 2 * EPS, box[1] - 2 * EPS, box[2] + 2 * EPS, box[3] + 2 * EPS)
        assert got and segment_box_oracle(a, b, grown)


@settings(max_examples=200, deadline=None)
@given(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), st.floats(0, 2 * math.pi), st.floats(0, 1))
def test_cell_of_point_on_segment_is_hit(a, ang, t):
    b = (a[0] + 0.8 * math.cos(ang), a[1] + 0.8 * math.sin(ang))
    p = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    assert segment_intersects_cell(a, b, cell_of(p))


def test_triangle_containment_examples():
    udg = build_udg([(1, (0, 0)), (2, (0.9, 0)), (3, (0.45, 0.7)), (4, (0.45, -0.7))])
    assert triangles_containing_point((0.45, 0.2), udg) == {1, 2, 3}
    assert triangles_containing_point((3, 3), udg) == set()
    # a point on the shared side belongs to both triangles
    assert triangles_containing_point((0.3, 0.0), udg) == {1, 2, 3, 4}


# -- active cells ------------------------------------------------------------------

def test_single_unit_edge_cells():
    udg = build_udg([(0, (0.0, 0.0)), (1, (1.0, 0.0))])
    got = compute_active_cells(udg).active
    # y = 0 is a grid line: rows -1 and 0 both touch the segment
    assert got == {(i, j) for i in range(-1, 3) for j in (-1, 0)}
    assert got == active_oracle(udg)


def test_close_pair_in_one_cell():
    udg = build_udg([(0, (0.1, 0.1)), (1, (0.2, 0.15))])
    assert compute_active_cells(udg).active == {(0, 0)}


@pytest.mark.parametrize("seed", [0, 1])
def test_active_cells_match_oracle(seed):
    udg = instance(seed, 40).udg()
    assert compute_active_cells(udg).active == active_oracle(udg)


def test_dense_disk_cells_match_oracle():
    pts = []
    k = 0
    for i in range(-6, 7):
        for j in range(-6, 7):
            x, y = i * 0.31 + 0.013 * j, j * 0.29 + 0.007 * i
            if x * x + y * y <= 4:
                pts.append((k, (x, y)))
                k += 1
    udg = build_udg(pts)
    assert compute_active_cells(udg).active == active_oracle(udg)


def test_local_candidacies_match_central():
    udg = instance(3, 80).udg()
    cells = compute_active_cells(udg)
    for u in udg.ids:
        local = local_candidacies(u, udg)
        for g, bit in local.items():
            assert u in (cells.c1 if bit else cells.c2)[g]
    for g in cells.active:
        for u in cells.candidates(g):
            assert g in local_candidacies(u, udg)


# -- holes ----------------------------------------------------------------------------

def test_hole_detection_examples():
    block = {(i, j) for i in range(3) for j in range(3)}
    assert not has_enclosed_inactive_region(block)
    assert has_enclosed_inactive_region(block - {(1, 1)})
    ell = {(0, j) for j in range(4)} | {(i, 0) for i in range(4)}
    assert not has_enclosed_inactive_region(ell)


def test_diagonal_gap_is_not_enclosed():
    block = {(i, j) for i in range(3) for j in range(3)}
    # (1, 1) reaches the outside only through the corner it shares with (2, 2)
    assert not has_enclosed_inactive_region(block - {(1, 1), (2, 2)})
    # a 2x2 inactive core inside a 4x4 ring is enclosed
    ring = {(i, j) for i in range(4) for j in range(4)} - {(1, 1), (2, 2), (1, 2), (2, 1)}
    assert has_enclosed_inactive_region(ring)
    assert not has_enclosed_inactive_region(ring - {(3, 2)})


# -- invariants on random instances --------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_close_segments_connect(seed):
    udg = instance(seed, 60).udg()
    edges = list(udg.edges)
    for (a, b), (c, d) in itertools.combinations(edges, 2):
        if segment_distance(udg.pos[a], udg.pos[b], udg.pos[c], udg.pos[d]) <= math.sqrt(3) / 2:
            assert {a, b} & {c, d} or any(y in udg.adj[x] for x in (a, b) for y in (c, d))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_candidates_close_and_within_three_hops(seed):
    udg = instance(seed, 100).udg()
    cells = compute_active_cells(udg)
    bound = 1 + C / math.sqrt(2)
    for g in cells.active:
        cand = sorted(cells.candidates(g))
        center = cell_center(g)
        for u in cand:
            assert math.dist(udg.pos[u], center) <= bound + EPS
        for u in cand:
            d = bfs_distances(udg.adj, u)
            assert all(d[v] <= 3 for v in cand)


def test_every_active_cell_has_an_incidence():
    udg = instance(4, 100).udg()
    cells = compute_active_cells(udg)
    for g in cells.active:
        assert cells.edges_in.get(g) or cells.c1.get(g)
