"""Slow, independent reference implementations used to check the planner.

Nothing here imports the library's geometry: segments are clipped against
closed cell squares with exact rational arithmetic, distances are scanned
pairwise, covers and tours are enumerated exhaustively.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from fractions import Fraction

import networkx as nx
import numpy as np


def segment_touches_square(a, b, cell) -> bool:
    """Liang-Barsky clip of the center-to-center segment a->b against the closed square of ``cell``."""
    (r0, c0), (r1, c1) = a, b
    lo, hi = Fraction(0), Fraction(1)
    for p0, d, center in ((r0, r1 - r0, cell[0]), (c0, c1 - c0, cell[1])):
        smin, smax = Fraction(2 * center - 1, 2), Fraction(2 * center + 1, 2)
        if d == 0:
            if not (smin <= p0 <= smax):
                return False
            continue
        t0, t1 = (smin - p0) / d, (smax - p0) / d
        if t0 > t1:
            t0, t1 = t1, t0
        lo, hi = max(lo, t0), min(hi, t1)
        if lo > hi:
            return False
    return True


@lru_cache(maxsize=None)
def _supercover_from_origin(dr: int, dc: int) -> frozenset:
    rows = range(min(0, dr) - 1, max(0, dr) + 2)
    cols = range(min(0, dc) - 1, max(0, dc) + 2)
    return frozenset((r, c) for r in rows for c in cols if segment_touches_square((0, 0), (dr, dc), (r, c)))


def supercover(a, b) -> set:
    """Every cell whose closed square the segment a->b touches."""
    # the rasterization is translation invariant, so clip from the origin once per offset
    offs = _supercover_from_origin(b[0] - a[0], b[1] - a[1])
    return {(a[0] + r, a[1] + c) for r, c in offs}


def visible(free: np.ndarray, a, b, r_cells: float) -> bool:
    if math.dist(a, b) > r_cells + 1e-9:
        return False
    h, w = free.shape
    for r, c in supercover(a, b):
        if not (0 <= r < h and 0 <= c < w) or not free[r, c]:
            return False
    return True


def visible_set(free: np.ndarray, src, r_cells: float) -> set:
    return {tuple(x) for x in np.argwhere(free) if visible(free, src, tuple(x), r_cells)}


def obstacle_distance(blocked: np.ndarray, resolution: float) -> np.ndarray:
    """Nearest blocked cell center for every cell, by scanning all blocked cells."""
    obs = np.argwhere(blocked)
    if len(obs) == 0:
        return np.full(blocked.shape, np.inf)
    cells = np.argwhere(np.ones(blocked.shape, dtype=bool))
    # all cell/obstacle pairs at once
    d2 = ((cells[:, None, :] - obs[None, :, :]) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=1)).reshape(blocked.shape) * resolution


def boundary_cells(cells: set, shape) -> set:
    h, w = shape
    out = set()
    for r, c in cells:
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = (r + dr, c + dc)
            if not (0 <= q[0] < h and 0 <= q[1] < w) or q not in cells:
                out.add((r, c))
                break
    return out


def min_set_cover(universe: set, sets: list[set]) -> int:
    """Size of a minimum cover, by depth-first search with a counting bound."""
    sets = [frozenset(s & universe) for s in sets]
    # drop sets contained in another set
    sets = sorted(set(sets), key=len, reverse=True)
    kept = []
    for s in sets:
        if not any(s <= k for k in kept):
            kept.append(s)
    by_elem = {e: [s for s in kept if e in s] for e in universe}
    ids = {s: k for k, s in enumerate(kept)}
    fam = {e: frozenset(ids[s] for s in by_elem[e]) for e in universe}
    best = [_greedy_size(universe, kept)]

    def lower_bound(uncovered) -> int:
        # elements whose covering families are pairwise disjoint each need their own set
        used_sets: set = set()
        n = 0
        for e in sorted(uncovered, key=lambda x: (len(fam[x]), x)):
            if used_sets.isdisjoint(fam[e]):
                used_sets |= fam[e]
                n += 1
        return n

    def dfs(uncovered: frozenset, used: int):
        if not uncovered:
            best[0] = min(best[0], used)
            return
        if used + lower_bound(uncovered) >= best[0]:
            return
        # branch on the element with the fewest covering sets
        e = min(uncovered, key=lambda x: (len(by_elem[x]), x))
        for s in sorted(by_elem[e], key=lambda s: -len(s & uncovered)):
            dfs(uncovered - s, used + 1)

    dfs(frozenset(universe), 0)
    return best[0]


def _greedy_size(universe, sets) -> int:
    left = set(universe)
    n = 0
    while left:
        s = max(sets, key=lambda s: len(s & left))
        left -= s
        n += 1
    return n


def harmonic(n: int) -> float:
    return sum(1.0 / k for k in range(1, n + 1))


def best_path_length(dist: np.ndarray, start: int, closed: bool = False) -> float:
    """Shortest Hamiltonian path (or cycle) from ``start`` by trying every order."""
    n = len(dist)
    rest = [i for i in range(n) if i != start]
    best = math.inf
    for perm in itertools.permutations(rest):
        order = (start,) + perm + ((start,) if closed and n > 1 else ())
        best = min(best, sum(dist[a, b] for a, b in zip(order, order[1:])))
    return 0.0 if n == 1 else best


def floyd_warshall(n: int, edges: dict) -> np.ndarray:
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for (i, j), w in edges.items():
        d[i, j] = d[j, i] = min(d[i, j], w)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def grid_graph(free: np.ndarray, resolution: float) -> nx.Graph:
    """8-connected grid graph; a diagonal step is allowed unless both side cells are blocked."""
    g = nx.Graph()
    h, w = free.shape
    for r, c in zip(*np.nonzero(free)):
        g.add_node((int(r), int(c)))
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            q = (r + dr, c + dc)
            if not (0 <= q[0] < h and 0 <= q[1] < w) or not free[q]:
                continue
            if dr and dc and not free[r, c + dc] and not free[r + dr, c]:
                continue
            g.add_edge((int(r), int(c)), (int(q[0]), int(q[1])), weight=resolution * math.hypot(dr, dc))
    return g


def grid_shortest(free: np.ndarray, resolution: float, a, b) -> float | None:
    g = grid_graph(free, resolution)
    try:
        return nx.dijkstra_path_length(g, a, b)
    except nx.NetworkXNoPath:
        return None
