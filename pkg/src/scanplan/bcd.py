"""Boustrophedon (lawnmower) coverage baseline.

Free space is split into vertical cells wherever the set of free column runs
changes topology (a run splits, merges, appears or vanishes).  Each cell is
swept with vertical lanes in alternating directions, cells are visited in
greedy nearest-first order, and viewpoints are dropped along the resulting
trajectory every ``r`` meters of arc length and at every lane end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .gridmap import Cell, MapError, OccupancyGrid
from .pathplan import PathError, astar, path_from_cells


@dataclass
class SweepCell:
    """A run of consecutive columns whose free runs connect one-to-one."""

    id: int
    start_col: int
    # column -> (top row, bottom row), inclusive
    runs: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def end_col(self) -> int:
        return self.start_col + len(self.runs) - 1


@dataclass
class SweepPlan:
    lanes: list[list[Cell]]
    viewpoints: list[Cell]
    lane_spacing: float
    trajectory: list[Cell] = field(repr=False)
    cells: list[SweepCell] = field(repr=False, default_factory=list)
    resolution: float = 1.0

    @property
    def trajectory_length(self) -> float:
        return path_from_cells(self.trajectory, self.resolution).length if self.trajectory else 0.0


def column_runs(free: np.ndarray, col: int) -> list[tuple[int, int]]:
    """Maximal vertical free intervals in one column, top to bottom."""
    x = np.concatenate(([False], free[:, col], [False])).astype(np.int8)
    d = np.diff(x)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def decompose(grid: OccupancyGrid) -> tuple[list[SweepCell], np.ndarray]:
    """Column-event cell decomposition; returns cells and a per-grid-cell label (-1 off free space)."""
    free = grid.free
    label = np.full(grid.shape, -1, dtype=np.int64)
    cells: list[SweepCell] = []
    prev: list[tuple[tuple[int, int], int]] = []  # (run, cell id) in the previous column
    for col in range(grid.width):
        runs = column_runs(free, col)
        cur = []
        for run in runs:
            overlaps = [(p, cid) for p, cid in prev if p[0] <= run[1] and run[0] <= p[1]]
            cid = None
            if len(overlaps) == 1:
                p, pid = overlaps[0]
                # continue only if the previous run touches no other run here either
                touching = [q for q in runs if q[0] <= p[1] and p[0] <= q[1]]
                if len(touching) == 1:
                    cid = pid
            if cid is None:
                cid = len(cells)
                cells.append(SweepCell(cid, col))
            cells[cid].runs[col] = run
            label[run[0] : run[1] + 1, col] = cid
            cur.append((run, cid))
        prev = cur
    return cells, label


def _lane_columns(cell: SweepCell, step: int) -> list[int]:
    width = len(cell.runs)
    cols = list(range(cell.start_col + min(step // 2, width - 1), cell.end_col + 1, step))
    # the last lane must leave no more than half a spacing uncovered at the far edge
    if cell.end_col - cols[-1] > step // 2:
        cols.append(cell.end_col)
    return cols


def _lane_distance(grid: OccupancyGrid, lane_mask: np.ndarray) -> np.ndarray:
    if not lane_mask.any():
        return np.full(grid.shape, np.inf)
    return ndimage.distance_transform_edt(~lane_mask) * grid.resolution


def plan_lanes(grid: OccupancyGrid, cells: list[SweepCell], label: np.ndarray, spacing: float) -> dict[int, list[int]]:
    """Lane columns per sweep cell, so every free cell lies within ``spacing`` of a lane."""
    step = max(1, int(math.floor(spacing / grid.resolution + 1e-9)))
    lanes = {c.id: _lane_columns(c, step) for c in cells}
    mask = np.zeros(grid.shape, dtype=bool)
    for c in cells:
        for col in lanes[c.id]:
            top, bottom = c.runs[col]
            mask[top : bottom + 1, col] = True
    free = grid.free
    while True:
        far = free & (_lane_distance(grid, mask) > spacing + 1e-9)
        if not far.any():
            return {k: sorted(v) for k, v in lanes.items()}
        # a run shorter than its neighbours can leave a gap; add a lane right there
        row, col = map(int, np.argwhere(far)[0])
        cid = int(label[row, col])
        lanes[cid].append(col)
        top, bottom = cells[cid].runs[col]
        mask[top : bottom + 1, col] = True


def _connect(grid: OccupancyGrid, a: Cell, b: Cell) -> list[Cell]:
    path = astar(grid, a, b)
    if path is None:
        raise PathError(f"no path between sweep cells at {a} and {b}")
    return list(path.cells)


def sample_viewpoints(trajectory: list[Cell], turns: set[int], r: float, resolution: float) -> list[Cell]:
    """Viewpoints along a trajectory: the first cell, every lane end, and enough
    intermediate cells that no stretch between viewpoints exceeds ``r`` of arc length."""
    if not trajectory:
        return []
    out = [0]
    since = 0.0
    for i in range(1, len(trajectory)):
        (r0, c0), (r1, c1) = trajectory[i - 1], trajectory[i]
        step = resolution * (math.sqrt(2.0) if r0 != r1 and c0 != c1 else 1.0)
        if since + step > r + 1e-9 and out[-1] != i - 1:
            out.append(i - 1)
            since = 0.0
        since += step
        if i in turns or i == len(trajectory) - 1:
            out.append(i)
            since = 0.0
    pts = []
    for i in out:
        cell = trajectory[i]
        if not pts or pts[-1] != cell:
            pts.append(cell)
    return pts


def bcd_plan(grid: OccupancyGrid, r: float, lane_spacing: float | None = None) -> SweepPlan:
    if r <= 0:
        raise ValueError("r must be positive")
    lane_spacing = r if lane_spacing is None else lane_spacing
    if lane_spacing <= 0:
        raise ValueError("lane_spacing must be positive")
    if r < grid.resolution * math.sqrt(2.0):
        raise ValueError("r must be at least one diagonal cell step")
    if grid.free_count == 0:
        raise MapError("grid has no free cells")
    cells, label = decompose(grid)
    lane_cols = plan_lanes(grid, cells, label, lane_spacing)

    # lane segments per cell, sweeping alternately down and up
    segments: dict[int, list[list[Cell]]] = {}
    for c in cells:
        segs = []
        for k, col in enumerate(lane_cols[c.id]):
            top, bottom = c.runs[col]
            rows = range(top, bottom + 1) if k % 2 == 0 else range(bottom, top - 1, -1)
            segs.append([(row, col) for row in rows])
        segments[c.id] = segs

    # greedy nearest-first cell order, starting from the leftmost cell
    todo = set(segments)
    order = []
    pos = None
    while todo:
        if pos is None:
            nxt = min(todo)
        else:
            nxt = min(todo, key=lambda cid: (math.dist(pos, segments[cid][0][0]), cid))
        todo.remove(nxt)
        order.append(nxt)
        pos = segments[nxt][-1][-1]

    trajectory: list[Cell] = []
    turns: set[int] = set()
    lanes: list[list[Cell]] = []
    for cid in order:
        for seg in segments[cid]:
            if trajectory:
                link = _connect(grid, trajectory[-1], seg[0])
                trajectory.extend(link[1:])
            else:
                trajectory.append(seg[0])
            turns.add(len(trajectory) - 1)
            trajectory.extend(seg[1:])
            turns.add(len(trajectory) - 1)
            lanes.append([seg[0], seg[-1]])
    viewpoints = sample_viewpoints(trajectory, turns, r, grid.resolution)
    return SweepPlan(lanes, viewpoints, lane_spacing, trajectory, cells, grid.resolution)


def sweep_to_dict(plan: SweepPlan, grid: OccupancyGrid) -> dict:
    return {
        "lane_spacing_m": plan.lane_spacing,
        "lanes": [[list(a), list(b)] for a, b in plan.lanes],
        "viewpoints": [
            {"index": list(c), "world_xy": list(grid.cell_to_world(c))} for c in plan.viewpoints
        ],
        "trajectory_length_m": plan.trajectory_length,
        "cell_count": len(plan.cells),
    }
