"""Seeded synthetic indoor worlds: empty room, corridor, rooms, loop, random obstacles.

``width`` and ``height`` give the interior size in cells; every world gets a
one-cell wall ring around it, so the grid is ``(height + 2) x (width + 2)``.
Doorways and gaps are sized in meters so that the default robot inflation
never disconnects the free space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .gridmap import FREE, OCCUPIED, MapError, OccupancyGrid

RECIPES = ("empty", "corridor", "rooms", "loop", "random-obstacles")

# world recipes are desk-scale: 0.1 m cells keep a 200x200 map at 20 m x 20 m
RECIPE_RESOLUTION = 0.1
DOOR_WIDTH_M = 1.2
MIN_ROOM_M = 2.5


@dataclass(frozen=True)
class WorldRecipe:
    name: str
    width: int = 100
    height: int = 100
    resolution: float = RECIPE_RESOLUTION
    seed: int = 0

    @classmethod
    def parse(cls, text: str, seed: int = 0, resolution: float = RECIPE_RESOLUTION) -> "WorldRecipe":
        """Parse ``name`` or ``name:WxH`` (e.g. ``rooms:200x200``)."""
        name, _, size = text.partition(":")
        if not size:
            return cls(name, seed=seed, resolution=resolution)
        try:
            w, h = (int(v) for v in size.lower().split("x"))
        except ValueError:
            raise MapError(f"bad recipe size {size!r}, expected WxH") from None
        return cls(name, w, h, resolution, seed)


def generate_world(recipe: WorldRecipe) -> OccupancyGrid:
    if recipe.name not in RECIPES:
        raise MapError(f"unknown recipe {recipe.name!r}; choose from {', '.join(RECIPES)}")
    if recipe.width < 1 or recipe.height < 1:
        raise MapError(f"world dimensions must be positive, got {recipe.width}x{recipe.height}")
    rng = np.random.default_rng(recipe.seed)
    h, w = recipe.height, recipe.width
    inner = np.zeros((h, w), dtype=bool)  # True = wall
    builder = {
        "empty": lambda: None,
        "corridor": lambda: _corridor(inner, recipe, rng),
        "rooms": lambda: _rooms(inner, recipe, rng),
        "loop": lambda: _loop(inner, recipe, rng),
        "random-obstacles": lambda: _random_obstacles(inner, recipe, rng),
    }[recipe.name]
    builder()
    cells = np.full((h + 2, w + 2), OCCUPIED, dtype=np.uint8)
    cells[1:-1, 1:-1] = np.where(inner, OCCUPIED, FREE)
    _keep_largest_component(cells)
    return OccupancyGrid(cells, recipe.resolution)


def _cells(meters: float, resolution: float) -> int:
    return max(1, int(round(meters / resolution)))


def _keep_largest_component(cells: np.ndarray):
    labels, n = ndimage.label(cells == FREE)
    if n > 1:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        cells[(labels != 0) & (labels != int(np.argmax(sizes)))] = OCCUPIED


def _split_points(length: int, min_part: int, rng) -> list[int]:
    """Wall positions splitting ``length`` into parts of at least ``min_part`` cells."""
    n_parts = max(1, length // (min_part + 1))
    if n_parts == 1:
        return []
    base = np.linspace(0, length, n_parts + 1)[1:-1]
    slack = max(0, (length - n_parts * (min_part + 1)) // (2 * n_parts))
    cuts = []
    for b in base:
        jitter = int(rng.integers(-slack, slack + 1)) if slack else 0
        cuts.append(int(round(b)) + jitter)
    return cuts


def _door(lo: int, hi: int, door: int, rng) -> tuple[int, int]:
    """A doorway ``[a, a + door)`` inside the free span ``[lo, hi)``."""
    span = hi - lo
    if span <= door:
        return lo, hi
    a = lo + int(rng.integers(0, span - door + 1))
    return a, a + door


def _corridor(inner: np.ndarray, recipe: WorldRecipe, rng):
    h, w = inner.shape
    res = recipe.resolution
    min_room = _cells(MIN_ROOM_M, res)
    door = _cells(DOOR_WIDTH_M, res)
    band = max(_cells(2.0, res), h // 3)
    side = (h - band) // 2
    if side < min_room:
        # too thin for side rooms: a plain corridor
        return
    top_wall = side
    bottom_wall = side + band + 1
    if bottom_wall >= h:
        return
    inner[top_wall, :] = True
    inner[bottom_wall, :] = True
    for lo_row, hi_row, wall_row in ((0, top_wall, top_wall), (bottom_wall + 1, h, bottom_wall)):
        cuts = _split_points(w, min_room, rng)
        for c in cuts:
            inner[lo_row:hi_row, c] = True
        edges = [-1] + cuts + [w]
        for left, right in zip(edges[:-1], edges[1:]):
            a, b = _door(left + 1, right, door, rng)
            inner[wall_row, a:b] = False


def _rooms(inner: np.ndarray, recipe: WorldRecipe, rng):
    h, w = inner.shape
    res = recipe.resolution
    min_room = _cells(MIN_ROOM_M, res)
    door = _cells(DOOR_WIDTH_M, res)
    room = _cells(3.5, res)
    col_cuts = _split_points(w, max(min_room, room), rng)
    row_cuts = _split_points(h, max(min_room, room), rng)
    for c in col_cuts:
        inner[:, c] = True
    for r in row_cuts:
        inner[r, :] = True
    col_edges = [-1] + col_cuts + [w]
    row_edges = [-1] + row_cuts + [h]
    # a door in every wall segment between neighbouring rooms
    for c in col_cuts:
        for top, bottom in zip(row_edges[:-1], row_edges[1:]):
            a, b = _door(top + 1, bottom, door, rng)
            inner[a:b, c] = False
    for r in row_cuts:
        for left, right in zip(col_edges[:-1], col_edges[1:]):
            a, b = _door(left + 1, right, door, rng)
            inner[r, a:b] = False
    # occasional furniture block, kept a doorway-width away from the room walls
    for top, bottom in zip(row_edges[:-1], row_edges[1:]):
        for left, right in zip(col_edges[:-1], col_edges[1:]):
            rh, rw = bottom - top - 1, right - left - 1
            if rng.random() < 0.5 or min(rh, rw) < 2 * door + 4:
                continue
            bh = int(rng.integers(2, max(3, (rh - 2 * door) // 2)))
            bw = int(rng.integers(2, max(3, (rw - 2 * door) // 2)))
            r0 = top + 1 + door + int(rng.integers(0, rh - 2 * door - bh + 1))
            c0 = left + 1 + door + int(rng.integers(0, rw - 2 * door - bw + 1))
            inner[r0 : r0 + bh, c0 : c0 + bw] = True


def _loop(inner: np.ndarray, recipe: WorldRecipe, rng):
    h, w = inner.shape
    res = recipe.resolution
    lane = max(_cells(2.0, res), min(h, w) // 4)
    if h <= 2 * lane + 2 or w <= 2 * lane + 2:
        raise MapError(f"loop world {w}x{h} too small for {lane}-cell lanes")
    jr = int(rng.integers(0, max(1, lane // 4)))
    jc = int(rng.integers(0, max(1, lane // 4)))
    inner[lane + jr : h - lane, lane + jc : w - lane] = True


def _random_obstacles(inner: np.ndarray, recipe: WorldRecipe, rng):
    h, w = inner.shape
    res = recipe.resolution
    gap = _cells(1.0, res)
    max_side = max(2, _cells(2.0, res))
    target = 0.2 * h * w
    # blocks (and the border) already placed; new blocks keep a full gap from them
    placed = np.zeros((h + 2, w + 2), dtype=bool)
    placed[0, :] = placed[-1, :] = placed[:, 0] = placed[:, -1] = True
    for _ in range(200):
        if inner.sum() >= target:
            break
        bh = int(rng.integers(2, max_side + 1))
        bw = int(rng.integers(2, max_side + 1))
        if bh >= h or bw >= w:
            continue
        r0 = int(rng.integers(0, h - bh + 1))
        c0 = int(rng.integers(0, w - bw + 1))
        window = placed[max(0, r0 + 1 - gap) : r0 + 1 + bh + gap, max(0, c0 + 1 - gap) : c0 + 1 + bw + gap]
        if window.any():
            continue
        inner[r0 : r0 + bh, c0 : c0 + bw] = True
        placed[r0 + 1 : r0 + 1 + bh, c0 + 1 : c0 + 1 + bw] = True

