"""Random and hand-built grids shared by the tests."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from scanplan.gridmap import FREE, OCCUPIED, OccupancyGrid


def keep_largest(cells: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(cells == FREE)
    if n > 1:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        cells[(labels != 0) & (labels != int(np.argmax(sizes)))] = OCCUPIED
    return cells


def noise_grid(rng, h: int, w: int, density: float, resolution: float = 0.1, connected: bool = False) -> OccupancyGrid:
    """Independent random obstacle cells."""
    cells = np.where(rng.random((h, w)) < density, OCCUPIED, FREE).astype(np.uint8)
    if connected:
        keep_largest(cells)
    return OccupancyGrid(cells, resolution)


def block_grid(rng, lo: int = 6, hi: int = 20, resolution: float = 0.1) -> OccupancyGrid:
    """A small map-like grid: a few solid rectangular obstacles, single free component."""
    h, w = (int(x) for x in rng.integers(lo, hi + 1, size=2))
    cells = np.full((h, w), FREE, dtype=np.uint8)
    for _ in range(int(rng.integers(1, 7))):
        bh, bw = (int(x) for x in rng.integers(1, 5, size=2))
        r0 = int(rng.integers(0, max(1, h - bh + 1)))
        c0 = int(rng.integers(0, max(1, w - bw + 1)))
        cells[r0 : r0 + bh, c0 : c0 + bw] = OCCUPIED
    keep_largest(cells)
    return OccupancyGrid(cells, resolution)


# Detour fixture: eight viewpoints around a wall, in meters (x right, y up).
WALL_POINTS = {
    1: (14.0, 6.0),
    2: (14.0, 0.0),
    3: (14.0, -9.9),
    4: (7.0, -16.9),
    5: (0.0, -9.9),
    6: (0.0, 0.0),
    7: (5.0, 6.0),
    8: (0.0, 12.0),
}
WALL_RES = 0.1
WALL_R = 10.0
_X0, _Y0 = -3.0, 15.0


def wall_cell(x: float, y: float) -> tuple[int, int]:
    return int(round((_Y0 - y) / WALL_RES)), int(round((x - _X0) / WALL_RES))


def wall_world() -> tuple[OccupancyGrid, list[tuple[int, int]]]:
    """Walled 26 m x 35 m area with a wall at y = 3 m spanning x in [6, 20] m.

    The wall hides x2 from x1 (and x6 from x1); x2 is reachable either along the
    long arm x7, x6, x5, x4, x3 or across the open middle between x6 and x2.
    Returns the grid and the viewpoint cells in order x1..x8.
    """
    h, w = int(35 / WALL_RES) + 1, int(26 / WALL_RES) + 1
    cells = np.zeros((h, w), dtype=np.uint8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = OCCUPIED
    row = wall_cell(0.0, 3.0)[0]
    cells[row, wall_cell(6.0, 3.0)[1] : wall_cell(20.0, 3.0)[1] + 1] = OCCUPIED
    grid = OccupancyGrid(cells, WALL_RES)
    return grid, [wall_cell(*WALL_POINTS[k]) for k in range(1, 9)]
