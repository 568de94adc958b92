"""8-connected grid A* used to validate and measure the legs of a tour."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .gridmap import Cell, MapError, OccupancyGrid

SQRT2 = math.sqrt(2.0)


class PathError(MapError):
    pass


@dataclass(frozen=True)
class GridPath:
    cells: tuple[Cell, ...]
    orthogonal_steps: int
    diagonal_steps: int
    resolution: float

    @property
    def length(self) -> float:
        return self.resolution * (self.orthogonal_steps + SQRT2 * self.diagonal_steps)


def path_from_cells(cells, resolution: float) -> GridPath:
    cells = tuple((int(r), int(c)) for r, c in cells)
    orth = diag = 0
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        dr, dc = abs(r1 - r0), abs(c1 - c0)
        if max(dr, dc) != 1:
            raise PathError(f"cells {(r0, c0)} and {(r1, c1)} are not 8-adjacent")
        if dr and dc:
            diag += 1
        else:
            orth += 1
    return GridPath(cells, orth, diag, resolution)


def octile(a: Cell, b: Cell) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dr, dc) + (SQRT2 - 1) * min(dr, dc)


def astar(grid: OccupancyGrid, start: Cell, goal: Cell) -> GridPath | None:
    """Shortest 8-connected path (octile step costs, no corner cutting) or None."""
    for cell in (start, goal):
        if not grid.is_free(cell):
            raise PathError(f"endpoint {cell} is not free")
    if start == goal:
        return GridPath((start,), 0, 0, grid.resolution)
    w = grid.width
    free = grid.free.ravel().tolist()
    h = grid.height
    s, t = grid.flat(start), grid.flat(goal)
    gr, gc = goal
    g = {s: 0.0}
    parent = {s: -1}
    closed = set()
    heap = [(octile(start, goal), 0.0, s)]
    moves = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
             (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]
    while heap:
        _, gu, u = heapq.heappop(heap)
        if u in closed:
            continue
        if u == t:
            break
        closed.add(u)
        ur, uc = divmod(u, w)
        for dr, dc, cost in moves:
            vr, vc = ur + dr, uc + dc
            if not (0 <= vr < h and 0 <= vc < w):
                continue
            v = vr * w + vc
            if not free[v] or v in closed:
                continue
            if dr and dc and not free[ur * w + vc] and not free[vr * w + uc]:
                continue
            nv = gu + cost
            if nv < g.get(v, math.inf) - 1e-12:
                g[v] = nv
                parent[v] = u
                hv = max(abs(vr - gr), abs(vc - gc)) + (SQRT2 - 1) * min(abs(vr - gr), abs(vc - gc))
                heapq.heappush(heap, (nv + hv, nv, v))
    if t not in parent:
        return None
    out = []
    v = t
    while v != -1:
        out.append(divmod(v, w))
        v = parent[v]
    return path_from_cells(reversed(out), grid.resolution)


def tour_path_length(grid: OccupancyGrid, cells: list[Cell]) -> tuple[float, list[GridPath]]:
    """Total A* length through ``cells`` in order, with the per-leg paths."""
    legs = []
    for i, (a, b) in enumerate(zip(cells, cells[1:])):
        path = astar(grid, a, b)
        if path is None:
            raise PathError(f"tour leg {i} from {a} to {b} has no collision-free path")
        legs.append(path)
    return float(sum(p.length for p in legs)), legs
