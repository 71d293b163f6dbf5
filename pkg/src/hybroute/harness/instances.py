"""Random hole-free unit-disk instances and their JSON file format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import C, EPS, UdgInstance, build_udg, compute_active_cells, has_enclosed_inactive_region
from ..grid import GridGraph
from ..labelling import LabelError, build_portal_tree

SCHEMA = 1
MARGIN = 10 * EPS


class GenerationFailed(RuntimeError):
    pass


class InstanceFormatError(ValueError):
    pass


@dataclass
class InstanceFile:
    nodes: list[tuple[int, float, float]]
    meta: dict[str, Any] = field(default_factory=dict)
    schema: int = SCHEMA

    def to_json(self) -> str:
        doc = {
            "schema": self.schema,
            "nodes": [{"id": i, "x": x, "y": y} for i, x, y in self.nodes],
            "meta": self.meta,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "InstanceFile":
        try:
            doc = json.loads(text)
            if doc.get("schema") != SCHEMA:
                raise InstanceFormatError(f"unsupported schema {doc.get('schema')!r}")
            nodes = [(int(d["id"]), float(d["x"]), float(d["y"])) for d in doc["nodes"]]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InstanceFormatError(str(exc)) from exc
        return cls(nodes, dict(doc.get("meta", {})))

    def udg(self) -> UdgInstance:
        return build_udg((i, (x, y)) for i, x, y in self.nodes)


@dataclass(frozen=True)
class ShapeParams:
    density: float = 6.0  # points per unit area
    disk_radius: float = 2.0
    step: float = 1.5
    turn: float = 0.8  # std-dev of the heading change per step, radians
    jitter: float = 0.8  # lattice jitter as a fraction of the spacing
    cavity: float = 0.0  # radius of a forced empty disk at the region's centroid
    retries: int = 50


def rejection_reason(udg: UdgInstance) -> str | None:
    """Why an instance is unusable, or None when it is accepted."""
    if not udg.connected:
        return "disconnected"
    cells = compute_active_cells(udg)
    if has_enclosed_inactive_region(cells):
        return "enclosed inactive region"
    try:
        build_portal_tree(GridGraph.from_cells(cells))
    except LabelError as exc:
        return f"portal tree: {exc}"
    return None


def _walk(rng: np.random.Generator, n: int, sp: ShapeParams) -> np.ndarray:
    """Disk centers of a self-avoiding random walk covering about n / density.

    A step may not come near the older part of the walk, so the union of
    disks never closes a loop around an uncovered pocket.
    """
    target = n / sp.density
    probe = rng.uniform(-1, 1, size=(4000, 2))
    clearance = 2 * sp.disk_radius + 2.0
    while True:
        centers = [np.zeros(2)]
        heading = rng.uniform(0, 2 * math.pi)
        while True:
            cs = np.array(centers)
            lo, hi = cs.min(0) - sp.disk_radius, cs.max(0) + sp.disk_radius
            pts = lo + (probe + 1) / 2 * (hi - lo)
            if _in_union(pts, cs, sp.disk_radius).mean() * np.prod(hi - lo) >= target:
                return cs
            old = cs[: -max(1, int(clearance / sp.step) + 1)]
            for _ in range(16):
                h = heading + rng.normal(0, sp.turn)
                c = centers[-1] + sp.step * np.array([math.cos(h), math.sin(h)])
                if len(old) == 0 or np.hypot(*(old - c).T).min() >= clearance:
                    heading = h
                    centers.append(c)
                    break
            else:
                break  # boxed in: start a fresh walk


def _in_union(pts: np.ndarray, centers: np.ndarray, r: float) -> np.ndarray:
    return cKDTree(centers).query(pts, distance_upper_bound=r)[0] <= r


def _bad_points(xy: np.ndarray) -> np.ndarray:
    frac = np.mod(xy / C, 1.0) * C
    near_line = np.any((frac < MARGIN) | (C - frac < MARGIN), axis=1)
    bad = near_line.copy()
    pairs = cKDTree(xy).query_pairs(1.0 + MARGIN, output_type="ndarray")
    if len(pairs):
        d = np.hypot(*(xy[pairs[:, 0]] - xy[pairs[:, 1]]).T)
        close = pairs[(np.abs(d - 1.0) < MARGIN) | (d < MARGIN)]
        bad[close[:, 1]] = True
    return bad


def _sample(rng: np.random.Generator, n: int, sp: ShapeParams) -> np.ndarray:
    centers = _walk(rng, n, sp)
    lo, hi = centers.min(0) - sp.disk_radius, centers.max(0) + sp.disk_radius
    mid = centers.mean(0)

    def draw(k: int) -> np.ndarray:
        out = np.empty((0, 2))
        while len(out) < k:
            p = rng.uniform(lo, hi, size=(2 * k + 16, 2))
            out = np.vstack([out, p[inside(p)]])
        return out[:k]

    def inside(p: np.ndarray) -> np.ndarray:
        keep = _in_union(p, centers, sp.disk_radius)
        if sp.cavity > 0:
            keep &= np.hypot(*(p - mid).T) > sp.cavity
        return keep

    # jittered lattice: no large empty patches, unlike independent uniform points
    s = 1.0 / math.sqrt(sp.density)
    gx, gy = np.meshgrid(np.arange(lo[0], hi[0], s), np.arange(lo[1], hi[1], s))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    grid += rng.uniform(-sp.jitter * s / 2, sp.jitter * s / 2, size=grid.shape)
    grid = grid[inside(grid)]
    if len(grid) >= n:
        xy = grid[np.sort(rng.choice(len(grid), size=n, replace=False))]
    else:
        xy = np.vstack([grid, draw(n - len(grid))])
    for _ in range(100):
        bad = _bad_points(xy)
        if not bad.any():
            return xy
        xy[bad] = draw(int(bad.sum()))
    raise GenerationFailed("could not place points away from grid lines and unit distances")


def _pair(rng: np.random.Generator) -> np.ndarray:
    while True:
        a = rng.uniform(0, 1, size=2)
        ang = rng.uniform(0, 2 * math.pi)
        b = a + rng.uniform(0.1, 0.9) * np.array([math.cos(ang), math.sin(ang)])
        xy = np.array([a, b])
        if not _bad_points(xy).any():
            return xy


def generate_instance(seed: int, n: int, params: ShapeParams | None = None) -> InstanceFile:
    """Sample an accepted instance; every random choice comes from ``seed``."""
    if n < 2:
        raise ValueError("need at least two nodes")
    sp = params or ShapeParams()
    rng = np.random.default_rng(seed)
    reasons = []
    for attempt in range(sp.retries):
        xy = _pair(rng) if n == 2 else _sample(rng, n, sp)
        ids = rng.choice(10 * n, size=n, replace=False) + 1
        nodes = sorted((int(i), float(x), float(y)) for i, (x, y) in zip(ids, xy))
        inst = InstanceFile(nodes, {
            "seed": seed, "n": n, "attempt": attempt,
            "density": sp.density, "disk_radius": sp.disk_radius, "step": sp.step,
            "turn": sp.turn, "jitter": sp.jitter, "cavity": sp.cavity,
        })
        reason = rejection_reason(inst.udg())
        if reason is None:
            return inst
        reasons.append(reason)
    raise GenerationFailed(f"no accepted instance in {sp.retries} attempts: {reasons[-1]}")
