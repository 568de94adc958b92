"""Scan ordering: TSP tour over the viewpoints, then repair of infeasible legs.

A leg is feasible when its endpoints see each other within the sensor range.
The initial tour is built on plain Euclidean distances; every infeasible leg
is then replaced by a detour, either through the visibility graph (only
mutually visible viewpoint pairs) or through a Delaunay roadmap with a
relaxed range whose long edges are split by extra scan stops (Steiner nodes).
The cheaper detour under ``(1 - eta) * length + eta * new_stops`` wins.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .gridmap import Cell, MapError, OccupancyGrid
from .visibility import cell_distance, in_range, is_visible, line_is_free

log = logging.getLogger(__name__)

DEFAULT_ETA = 0.96
DEFAULT_RELAXED_FACTOR = 1.5
_EPS = 1e-12


class StrandedTourError(MapError):
    """An infeasible tour leg could not be detoured in either graph."""

    def __init__(self, pairs: list[tuple[Cell, Cell]]):
        self.pairs = pairs
        listed = ", ".join(f"{a}->{b}" for a, b in pairs)
        super().__init__(f"no detour found for tour leg(s): {listed}")


@dataclass(frozen=True)
class Node:
    id: int | None
    cell: Cell
    kind: str = "viewpoint"  # or "steiner"


class Graph:
    """Undirected graph over node ids with Euclidean edge weights in meters."""

    def __init__(self, cells: dict[int, Cell], resolution: float, kind: str):
        self.cells = dict(cells)
        self.resolution = resolution
        self.kind = kind
        self.adj: dict[int, dict[int, float]] = {i: {} for i in self.cells}

    def weight(self, i: int, j: int) -> float:
        return self.resolution * cell_distance(self.cells[i], self.cells[j])

    def add_edge(self, i: int, j: int):
        if i == j:
            raise ValueError("self loops are not allowed")
        w = self.weight(i, j)
        self.adj[i][j] = w
        self.adj[j][i] = w

    def remove_edge(self, i: int, j: int):
        self.adj[i].pop(j, None)
        self.adj[j].pop(i, None)

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.adj.get(i, ())

    def edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for i in self.adj for j in self.adj[i] if i < j)

    @property
    def isolated(self) -> list[int]:
        return sorted(i for i, nbrs in self.adj.items() if not nbrs)

    def copy(self) -> "Graph":
        g = Graph(self.cells, self.resolution, self.kind)
        g.adj = {i: dict(n) for i, n in self.adj.items()}
        return g

    def shortest_path(self, source: int, target: int) -> tuple[list[int], float] | None:
        """Dijkstra; among equal distances the lower node id is settled first."""
        dist = {source: 0.0}
        parent = {source: None}
        done = set()
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == target:
                break
            for v in sorted(self.adj[u]):
                nd = d + self.adj[u][v]
                if v not in done and nd < dist.get(v, math.inf) - _EPS:
                    dist[v] = nd
                    parent[v] = u
                    heapq.heappush(heap, (nd, v))
        if target not in done:
            return None
        path = [target]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        return path[::-1], dist[target]


def _cells_of(viewpoints) -> list[Cell]:
    cells = getattr(viewpoints, "cells", viewpoints)
    return [(int(r), int(c)) for r, c in cells]


def build_visibility_graph(grid: OccupancyGrid, viewpoints, r: float) -> Graph:
    cells = _cells_of(viewpoints)
    g = Graph(dict(enumerate(cells)), grid.resolution, "visibility")
    for i, j in combinations(range(len(cells)), 2):
        if is_visible(grid, cells[i], cells[j], r):
            g.add_edge(i, j)
    if g.isolated and len(cells) > 1:
        log.warning("visibility graph has isolated viewpoints: %s", g.isolated)
    return g


def build_roadmap(
    grid: OccupancyGrid, viewpoints, r_relaxed: float, visibility: Graph | None = None, r: float | None = None
) -> Graph:
    """Delaunay edges that are collision-free and no longer than ``r_relaxed``, plus all visibility edges."""
    cells = _cells_of(viewpoints)
    if visibility is None:
        visibility = build_visibility_graph(grid, cells, r if r is not None else r_relaxed)
    g = Graph(dict(enumerate(cells)), grid.resolution, "roadmap")
    for i, j in _delaunay_edges(cells):
        a, b = cells[i], cells[j]
        if in_range(grid, a, b, r_relaxed) and line_is_free(grid, a, b):
            g.add_edge(i, j)
    for i, j in visibility.edges():
        g.add_edge(i, j)
    return g


def _delaunay_edges(cells: list[Cell]) -> list[tuple[int, int]]:
    n = len(cells)
    if n < 2:
        return []
    if n >= 3:
        try:
            tri = Delaunay(np.asarray(cells, dtype=float))
            edges = set()
            for simplex in tri.simplices:
                for a, b in combinations(sorted(int(v) for v in simplex), 2):
                    edges.add((a, b))
            return sorted(edges)
        except QhullError:
            log.info("degenerate (collinear) viewpoints; roadmap falls back to a chain")
    order = sorted(range(n), key=lambda i: cells[i])
    return sorted(tuple(sorted(p)) for p in zip(order, order[1:]))


def insert_steiner(grid: OccupancyGrid, a: Cell, b: Cell, r: float) -> list[Cell] | None:
    """Split segment ``a``-``b`` into ``ceil(length / r)`` pieces; the snapped split
    points are returned when every piece is visible within ``r``, else None."""
    length = grid.resolution * cell_distance(a, b)
    if length <= r * (1 + 1e-9):
        return []
    k = math.ceil(length / r - 1e-9)
    pts = []
    for i in range(1, k):
        t = i / k
        cell = (math.floor(a[0] + t * (b[0] - a[0]) + 0.5), math.floor(a[1] + t * (b[1] - a[1]) + 0.5))
        if not grid.is_free(cell):
            return None
        if cell not in pts and cell != a and cell != b:
            pts.append(cell)
    chain = [a, *pts, b]
    if all(is_visible(grid, u, v, r) for u, v in zip(chain, chain[1:])):
        return pts
    return None


# ---------------------------------------------------------------------------
# TSP


def distance_matrix(cells: list[Cell], resolution: float) -> np.ndarray:
    pts = np.asarray(cells, dtype=float).reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    return resolution * np.sqrt((diff**2).sum(axis=2))


def path_length(order: list[int], dist: np.ndarray, closed: bool = False) -> float:
    total = float(sum(dist[a, b] for a, b in zip(order, order[1:])))
    if closed and len(order) > 1:
        total += float(dist[order[-1], order[0]])
    return total


def nearest_neighbor(dist: np.ndarray, start: int = 0) -> list[int]:
    n = len(dist)
    order = [start]
    left = np.ones(n, dtype=bool)
    left[start] = False
    while left.any():
        row = np.where(left, dist[order[-1]], np.inf)
        nxt = int(np.argmin(row))
        order.append(nxt)
        left[nxt] = False
    return order


def two_opt(order: list[int], dist: np.ndarray, closed: bool = False) -> list[int]:
    """First-improvement 2-opt with the first node fixed, scanning (i, j) lexicographically."""
    p = list(order)
    n = len(p)
    if n < 3:
        return p
    improved = True
    while improved:
        improved = False
        i = 1
        while i < n - 1:
            arr = np.asarray(p)
            js = np.arange(i + 1, n)
            a, b = arr[i - 1], arr[i]
            c = arr[js]
            after = np.empty(len(js), dtype=int)
            after[:-1] = arr[js[:-1] + 1]
            last_has_next = closed
            after[-1] = arr[0] if last_has_next else -1
            old = dist[a, b] + np.where(after >= 0, dist[c, np.maximum(after, 0)], 0.0)
            new = dist[a, c] + np.where(after >= 0, dist[b, np.maximum(after, 0)], 0.0)
            better = np.flatnonzero(new - old < -1e-10)
            if len(better):
                j = int(js[better[0]])
                p[i : j + 1] = p[i : j + 1][::-1]
                improved = True
                continue
            i += 1
    return p


def held_karp(dist: np.ndarray, start: int = 0, closed: bool = False) -> list[int]:
    """Optimal open (or closed) path from ``start`` by subset dynamic programming."""
    n = len(dist)
    others = [i for i in range(n) if i != start]
    m = len(others)
    if m == 0:
        return [start]
    full = (1 << m) - 1
    cost = np.full((1 << m, m), np.inf)
    back = np.full((1 << m, m), -1, dtype=int)
    for k, v in enumerate(others):
        cost[1 << k, k] = dist[start, v]
    for mask in range(1, full + 1):
        for k in range(m):
            c = cost[mask, k]
            if not (mask >> k) & 1 or not np.isfinite(c):
                continue
            for nk in range(m):
                if (mask >> nk) & 1:
                    continue
                nmask = mask | (1 << nk)
                nc = c + dist[others[k], others[nk]]
                if nc < cost[nmask, nk] - 1e-12:
                    cost[nmask, nk] = nc
                    back[nmask, nk] = k
    final = cost[full] + (dist[others, start] if closed else 0.0)
    k = int(np.argmin(final))
    order = []
    mask = full
    while k >= 0:
        order.append(others[k])
        k, mask = back[mask, k], mask & ~(1 << k)
    return [start] + order[::-1]


EXACT_TSP_MAX = 10


def tsp_order(cells: list[Cell], resolution: float = 1.0, start: int = 0, closed: bool = False) -> list[int]:
    """Visit order starting at ``start``: exact for small inputs, else nearest neighbour + 2-opt."""
    dist = distance_matrix(cells, resolution)
    if len(cells) == 0:
        return []
    if len(cells) <= EXACT_TSP_MAX:
        return held_karp(dist, start, closed)
    return two_opt(nearest_neighbor(dist, start), dist, closed)


# ---------------------------------------------------------------------------
# tours and detours


@dataclass(frozen=True)
class Leg:
    tail: int
    head: int
    length: float
    feasible: bool


@dataclass
class Tour:
    nodes: list[Node]
    sequence: list[int]
    resolution: float
    closed: bool = False
    legs: list[Leg] = field(default_factory=list)
    repairs: list[dict] = field(default_factory=list)

    @property
    def cells(self) -> list[Cell]:
        return [self.nodes[i].cell for i in self.sequence]

    @property
    def total_length(self) -> float:
        return float(sum(leg.length for leg in self.legs))

    @property
    def added_viewpoints(self) -> int:
        return sum(1 for i in set(self.sequence) if self.nodes[i].kind == "steiner")

    @property
    def infeasible_legs(self) -> list[Leg]:
        return [leg for leg in self.legs if not leg.feasible]

    @property
    def unique_nodes(self) -> int:
        return len(set(self.sequence))


def compute_legs(grid: OccupancyGrid, nodes: list[Node], sequence: list[int], r: float) -> list[Leg]:
    legs = []
    for a, b in zip(sequence, sequence[1:]):
        ca, cb = nodes[a].cell, nodes[b].cell
        legs.append(Leg(a, b, grid.resolution * cell_distance(ca, cb), is_visible(grid, ca, cb, r)))
    return legs


def initial_tsp_tour(
    grid: OccupancyGrid, viewpoints, r: float, start: int = 0, closed: bool = False
) -> Tour:
    """Nearest neighbour plus 2-opt on Euclidean distances; legs may be infeasible."""
    cells = _cells_of(viewpoints)
    if not cells:
        raise MapError("no viewpoints to order")
    nodes = [Node(i, c, "viewpoint") for i, c in enumerate(cells)]
    order = tsp_order(cells, grid.resolution, start, closed)
    if closed and len(order) > 1:
        order = order + [order[0]]
    return Tour(nodes, order, grid.resolution, closed, compute_legs(grid, nodes, order, r))


@dataclass(frozen=True)
class DetourPath:
    waypoints: tuple[Node, ...]
    length: float
    new_viewpoint_count: int
    graph: str

    def cost(self, eta: float) -> float:
        return detour_cost(self, eta)


def detour_cost(path: DetourPath, eta: float) -> float:
    if not (0 <= eta < 1):
        raise ValueError(f"eta must be in [0, 1), got {eta}")
    return (1 - eta) * path.length + eta * path.new_viewpoint_count


def detour(
    graph: Graph,
    tail: int,
    head: int,
    *,
    grid: OccupancyGrid | None = None,
    r: float | None = None,
    tour_cells: dict[Cell, int] | None = None,
) -> DetourPath | None:
    """Shortest detour from ``tail`` to ``head`` in ``graph``.

    Roadmap edges longer than ``r`` get Steiner stops; an edge that cannot be
    split is dropped and the search repeated.  ``tour_cells`` maps the cells
    already on the tour to their node ids; visiting them again costs nothing.
    """
    tour_cells = tour_cells or {}
    work = graph
    while True:
        found = work.shortest_path(tail, head)
        if found is None:
            return None
        ids, _ = found
        waypoints = [Node(ids[0], graph.cells[ids[0]], "viewpoint")]
        broken = None
        for u, v in zip(ids, ids[1:]):
            cu, cv = graph.cells[u], graph.cells[v]
            if graph.kind == "roadmap" and r is not None and not in_range(grid, cu, cv, r):
                pts = insert_steiner(grid, cu, cv, r)
                if pts is None:
                    broken = (u, v)
                    break
                for cell in pts:
                    known = tour_cells.get(cell)
                    waypoints.append(Node(known, cell, "viewpoint" if known is not None else "steiner"))
            waypoints.append(Node(v, cv, "viewpoint"))
        if broken is None:
            break
        if work is graph:
            work = graph.copy()
        work.remove_edge(*broken)
    in_tour = set(tour_cells.values())
    new = sum(1 for wp in waypoints[1:-1] if wp.id is None or wp.id not in in_tour)
    cells = [wp.cell for wp in waypoints]
    length = graph.resolution * sum(cell_distance(a, b) for a, b in zip(cells, cells[1:]))
    return DetourPath(tuple(waypoints), length, new, graph.kind)


def finalize_tour(
    grid: OccupancyGrid,
    tour: Tour,
    gv: Graph,
    gr: Graph,
    r: float,
    eta: float = DEFAULT_ETA,
) -> Tour:
    """Replace each infeasible leg with the cheaper detour (visibility graph wins ties)."""
    nodes = list(tour.nodes)
    cell_ids = {}
    for i in tour.sequence:
        cell_ids.setdefault(nodes[i].cell, i)
    seq = [tour.sequence[0]]
    repairs = []
    stranded = []
    for a, b in zip(tour.sequence, tour.sequence[1:]):
        ca, cb = nodes[a].cell, nodes[b].cell
        if is_visible(grid, ca, cb, r):
            seq.append(b)
            continue
        tau_v = detour(gv, a, b, tour_cells=cell_ids)
        tau_r = detour(gr, a, b, grid=grid, r=r, tour_cells=cell_ids)
        options = [p for p in (tau_v, tau_r) if p is not None]
        if not options:
            stranded.append((ca, cb))
            seq.append(b)
            continue
        best = min(options, key=lambda p: (detour_cost(p, eta), p.new_viewpoint_count, p.graph != "visibility"))
        for wp in best.waypoints[1:]:
            if wp.id is None:
                node = Node(len(nodes), wp.cell, "steiner")
                nodes.append(node)
                cell_ids[wp.cell] = node.id
                seq.append(node.id)
            else:
                seq.append(wp.id)
        repairs.append(
            {
                "edge": [a, b],
                "chosen": best.graph,
                "psi_visibility": None if tau_v is None else detour_cost(tau_v, eta),
                "psi_roadmap": None if tau_r is None else detour_cost(tau_r, eta),
                "length_visibility": None if tau_v is None else tau_v.length,
                "length_roadmap": None if tau_r is None else tau_r.length,
                "new_visibility": None if tau_v is None else tau_v.new_viewpoint_count,
                "new_roadmap": None if tau_r is None else tau_r.new_viewpoint_count,
                "waypoints": seq[len(seq) - len(best.waypoints) + 1 :],
            }
        )
    if stranded:
        raise StrandedTourError(stranded)
    legs = compute_legs(grid, nodes, seq, r)
    bad = [leg for leg in legs if not leg.feasible]
    if bad:
        raise StrandedTourError([(nodes[l.tail].cell, nodes[l.head].cell) for l in bad])
    return Tour(nodes, seq, grid.resolution, tour.closed, legs, repairs)


@dataclass
class PlannedTour:
    tour: Tour
    visibility: Graph
    roadmap: Graph
    initial: Tour
    timings: dict[str, float]


def plan_tour(
    grid: OccupancyGrid,
    viewpoints,
    r: float,
    eta: float = DEFAULT_ETA,
    relaxed_factor: float = DEFAULT_RELAXED_FACTOR,
    closed: bool = False,
) -> PlannedTour:
    t0 = time.perf_counter()
    gv = build_visibility_graph(grid, viewpoints, r)
    gr = build_roadmap(grid, viewpoints, relaxed_factor * r, gv)
    t1 = time.perf_counter()
    initial = initial_tsp_tour(grid, viewpoints, r, 0, closed)
    t2 = time.perf_counter()
    final = finalize_tour(grid, initial, gv, gr, r, eta)
    t3 = time.perf_counter()
    return PlannedTour(final, gv, gr, initial, {"graphs": t1 - t0, "tsp": t2 - t1, "repair": t3 - t2})


def tour_to_dict(tour: Tour, grid: OccupancyGrid) -> dict:
    used = sorted(set(tour.sequence))
    return {
        "nodes": [
            {
                "id": tour.nodes[i].id,
                "kind": tour.nodes[i].kind,
                "cell": list(tour.nodes[i].cell),
                "world_xy": list(grid.cell_to_world(tour.nodes[i].cell)),
            }
            for i in used
        ],
        "sequence": list(tour.sequence),
        "closed": tour.closed,
        "legs": [{"from": l.tail, "to": l.head, "length_m": l.length, "feasible": l.feasible} for l in tour.legs],
        "total_length_m": tour.total_length,
        "added_viewpoints": tour.added_viewpoints,
        "repairs": tour.repairs,
    }
