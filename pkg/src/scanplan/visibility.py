"""Line-of-sight visibility on occupancy grids.

Two free cells see each other when their centers are within the sensor range
and every cell touched by the straight segment between the centers (closed
cell squares, i.e. supercover rasterization) is free.  Touching a wall corner
blocks the line, so visibility never leaks through diagonal gaps.

:class:`VisibilityIndex` precomputes the rays of every offset inside the range
disk once; because rays between cell centers are translation invariant, the
visible set of any source is a gather over that table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .gridmap import Cell, MapError, OccupancyGrid

log = logging.getLogger(__name__)

# relative slack on range comparisons; keeps r = 2.0 m inclusive at 0.1 m cells
_RANGE_EPS = 1e-9
# packed visibility rows are kept for every cell below this many bytes
FULL_INDEX_BYTES = 512 * 2**20


class VisibilityError(MapError):
    pass


def range_in_cells(r: float, resolution: float) -> float:
    return r / resolution


def within_range(d2_cells: np.ndarray | int, rc: float):
    return d2_cells <= rc * rc * (1 + _RANGE_EPS) + _RANGE_EPS


@lru_cache(maxsize=1 << 16)
def _supercover(dr: int, dc: int) -> np.ndarray:
    I, J = np.mgrid[min(0, dr) : max(0, dr) + 1, min(0, dc) : max(0, dc) + 1]
    # parametrize the segment by t in [0, 1] scaled to integers: s = t * D
    A, B = max(abs(dr), 1), max(abs(dc), 1)
    D = 2 * A * B
    lo = np.zeros(I.shape, dtype=np.int64)
    hi = np.full(I.shape, D, dtype=np.int64)
    if dr:
        sgn = 1 if dr > 0 else -1
        a, b = sgn * (2 * I - 1) * B, sgn * (2 * I + 1) * B
        lo = np.maximum(lo, np.minimum(a, b))
        hi = np.minimum(hi, np.maximum(a, b))
    if dc:
        sgn = 1 if dc > 0 else -1
        a, b = sgn * (2 * J - 1) * A, sgn * (2 * J + 1) * A
        lo = np.maximum(lo, np.minimum(a, b))
        hi = np.minimum(hi, np.maximum(a, b))
    hit = lo <= hi
    # by entry, then exit: cells touched only at a corner come before the cell entered there
    order = np.lexsort((J[hit], I[hit], hi[hit], lo[hit]))
    out = np.stack([I[hit][order], J[hit][order]], axis=1)
    out.setflags(write=False)
    return out


def supercover_offsets(dr: int, dc: int) -> np.ndarray:
    """Offsets (relative to the start cell) of every cell the center-to-center
    segment towards ``(dr, dc)`` touches, in order along the segment."""
    return _supercover(int(dr), int(dc))


def segment_cells(a: Cell, b: Cell) -> np.ndarray:
    return supercover_offsets(b[0] - a[0], b[1] - a[1]) + np.asarray(a)


def line_is_free(grid: OccupancyGrid, a: Cell, b: Cell) -> bool:
    cells = segment_cells(a, b)
    r, c = cells[:, 0], cells[:, 1]
    if r.min() < 0 or c.min() < 0 or r.max() >= grid.height or c.max() >= grid.width:
        return False
    return bool(grid.free[r, c].all())


def cell_distance(a: Cell, b: Cell) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def in_range(grid: OccupancyGrid, a: Cell, b: Cell, r: float) -> bool:
    d2 = (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2
    return bool(within_range(d2, range_in_cells(r, grid.resolution)))


def is_visible(grid: OccupancyGrid, a: Cell, b: Cell, r: float) -> bool:
    """True iff ``a`` and ``b`` are within ``r`` meters and the segment between them is free."""
    for cell in (a, b):
        if not grid.is_free(cell):
            raise VisibilityError(f"cell {cell} is not free")
    return in_range(grid, a, b, r) and line_is_free(grid, a, b)


@lru_cache(maxsize=32)
def _ray_table(rc_key: float):
    rc = rc_key
    n = int(np.floor(rc + 1e-9))
    d = np.arange(-n, n + 1)
    dr, dc = np.meshgrid(d, d, indexing="ij")
    keep = within_range(dr**2 + dc**2, rc)
    offsets = np.stack([dr[keep], dc[keep]], axis=1)
    rays = [supercover_offsets(a, b) for a, b in offsets]
    ptr = np.zeros(len(rays) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in rays])
    cells = np.concatenate(rays)
    return offsets, ptr, cells, n


@lru_cache(maxsize=32)
def _ray_trie(rc_key: float):
    """Rays of :func:`_ray_table` merged into a prefix trie, flattened in preorder.

    Returns per-node ray cell, depth (root children at depth 1) and the offset
    index whose ray ends at that node (-1 when none does).
    """
    offsets, ptr, ray_cells, _ = _ray_table(rc_key)
    root: dict = {}
    ends: dict[int, int] = {}
    nodes: list = []
    for k in range(len(offsets)):
        node = root
        for cell in map(tuple, ray_cells[ptr[k] : ptr[k + 1]]):
            if cell not in node:
                node[cell] = {"#": len(nodes)}
                nodes.append(cell)
            node = node[cell]
        ends[node["#"]] = k
    cells, depth, terminal = [], [], []
    todo = [(root, 0)]
    while todo:
        node, d = todo.pop()
        if d:
            idx = node["#"]
            cells.append(nodes[idx])
            depth.append(d)
            terminal.append(ends.get(idx, -1))
        children = [v for key, v in node.items() if key != "#"]
        todo.extend((child, d + 1) for child in reversed(children))
    return np.array(cells, dtype=np.int64), np.array(depth), np.array(terminal)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VisibleSet:
    source: Cell
    mask: np.ndarray = field(repr=False)
    contour: tuple[Cell, ...] = ()

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))

    @cached_property
    def cells(self) -> frozenset:
        return frozenset((int(r), int(c)) for r, c in np.argwhere(self.mask))

    def __contains__(self, cell: Cell) -> bool:
        r, c = cell
        h, w = self.mask.shape
        return 0 <= r < h and 0 <= c < w and bool(self.mask[r, c])


@dataclass
class CoverageMask:
    covered: np.ndarray
    free_count: int

    @classmethod
    def empty(cls, grid: OccupancyGrid) -> "CoverageMask":
        return cls(np.zeros(grid.shape, dtype=bool), grid.free_count)

    @property
    def covered_count(self) -> int:
        return int(np.count_nonzero(self.covered))

    def add(self, visible: VisibleSet) -> int:
        """Union ``visible`` into the mask; returns the number of newly covered cells."""
        new = visible.mask & ~self.covered
        self.covered |= new
        return int(np.count_nonzero(new))


def coverage_fraction(mask: CoverageMask) -> float:
    if mask.free_count <= 0:
        raise ValueError("coverage of a grid without free cells is undefined")
    return mask.covered_count / mask.free_count


class VisibilityIndex:
    """Visible sets of a fixed grid at a fixed range ``r`` (meters).

    Rows of visibility flags (one bit per in-range offset) are computed either
    for the whole grid at once (:meth:`universe_sizes`) or lazily per source.
    """

    def __init__(self, grid: OccupancyGrid, r: float):
        if r < 0:
            raise ValueError(f"sensor range must be >= 0, got {r}")
        self.grid = grid
        self.r = float(r)
        self.rc = range_in_cells(r, grid.resolution)
        self.offsets, self._ptr, ray_cells, self.pad = _ray_table(round(self.rc, 9))
        self.K = len(self.offsets)
        h, w = grid.shape
        p = self.pad
        self._wp = w + 2 * p
        free_p = np.zeros((h + 2 * p, w + 2 * p), dtype=bool)
        free_p[p : p + h, p : p + w] = grid.free
        self._free_p = free_p
        self._free_flat = free_p.ravel()
        self._ray_flat = ray_cells[:, 0] * self._wp + ray_cells[:, 1]
        self._ray_cells = ray_cells
        self.off_flat = self.offsets[:, 0] * self._wp + self.offsets[:, 1]
        self._packed: np.ndarray | None = None
        self._lazy: dict[int, np.ndarray] = {}

    # index helpers ---------------------------------------------------------

    def padded_flat(self, rows, cols) -> np.ndarray:
        return (np.asarray(rows) + self.pad) * self._wp + np.asarray(cols) + self.pad

    def pad_mask(self, mask: np.ndarray) -> np.ndarray:
        """Flattened, zero-padded copy of a grid-shaped boolean mask."""
        p = self.pad
        out = np.zeros(self._free_p.shape, dtype=bool)
        out[p : p + mask.shape[0], p : p + mask.shape[1]] = mask
        return out.ravel()

    @property
    def memory_bytes_full(self) -> int:
        return self.grid.height * self.grid.width * ((self.K + 7) // 8)

    # bulk computation --------------------------------------------------------

    def universe_sizes(self) -> np.ndarray:
        """|S_i| for every cell of the grid (0 for non-free cells).

        Walks the ray trie in preorder so each shared ray prefix is ANDed once;
        the per-offset planes are bit-packed and kept for later per-source
        lookups when they fit in :data:`FULL_INDEX_BYTES`.
        """
        h, w = self.grid.shape
        p = self.pad
        fp = self._free_p
        cells, depth, terminal = _ray_trie(round(self.rc, 9))
        keep = self.memory_bytes_full <= FULL_INDEX_BYTES
        kb = (self.K + 7) // 8
        packed = np.zeros((kb, h, w), dtype=np.uint8) if keep else None
        sizes = np.zeros((h, w), dtype=np.int64)
        stack = np.empty((int(depth.max()) + 1, h, w), dtype=bool)
        stack[0] = True
        for (dr, dc), d, k in zip(cells, depth, terminal):
            np.logical_and(stack[d - 1], fp[p + dr : p + dr + h, p + dc : p + dc + w], out=stack[d])
            if k >= 0:
                acc = stack[d]
                sizes += acc
                if keep:
                    packed[k >> 3] |= acc.view(np.uint8) << np.uint8(7 - (k & 7))
        if keep:
            self._packed = np.ascontiguousarray(packed.transpose(1, 2, 0)).reshape(h * w, kb)
        return sizes

    def sizes_for(self, cells_flat: np.ndarray) -> np.ndarray:
        return self.flags(cells_flat).sum(axis=1)

    # per-source ------------------------------------------------------------

    def _compute_rows(self, flat: np.ndarray) -> np.ndarray:
        rows, cols = np.divmod(flat, self.grid.width)
        src = self.padded_flat(rows, cols)
        out = np.empty((len(flat), self.K), dtype=bool)
        nnz = len(self._ray_flat)
        chunk = max(1, 4_000_000 // max(nnz, 1))
        starts = self._ptr[:-1]
        for i in range(0, len(flat), chunk):
            s = src[i : i + chunk]
            ok = self._free_flat[s[:, None] + self._ray_flat[None, :]]
            out[i : i + chunk] = np.logical_and.reduceat(ok, starts, axis=1)
        return out

    def flags(self, cells_flat) -> np.ndarray:
        """Boolean (n, K) rows: offset k visible from source n."""
        flat = np.atleast_1d(np.asarray(cells_flat, dtype=np.int64))
        if self._packed is not None:
            return np.unpackbits(self._packed[flat], axis=1, count=self.K).astype(bool)
        missing = [int(f) for f in flat if int(f) not in self._lazy]
        if missing:
            rows = self._compute_rows(np.array(missing, dtype=np.int64))
            for f, row in zip(missing, rows):
                self._lazy[f] = np.packbits(row)
        if len(flat) == 0:
            return np.zeros((0, self.K), dtype=bool)
        packed = np.stack([self._lazy[int(f)] for f in flat])
        return np.unpackbits(packed, axis=1, count=self.K).astype(bool)

    def gains(self, cells_flat: np.ndarray, target_padded: np.ndarray) -> np.ndarray:
        """For each source, how many cells of ``target_padded`` (from :meth:`pad_mask`) it sees."""
        flat = np.asarray(cells_flat, dtype=np.int64)
        out = np.zeros(len(flat), dtype=np.int64)
        chunk = max(1, 2_000_000 // max(self.K, 1))
        for i in range(0, len(flat), chunk):
            part = flat[i : i + chunk]
            rows, cols = np.divmod(part, self.grid.width)
            src = self.padded_flat(rows, cols)
            hit = target_padded[src[:, None] + self.off_flat[None, :]] & self.flags(part)
            out[i : i + chunk] = hit.sum(axis=1)
        return out

    def visible_mask(self, cell: Cell) -> np.ndarray:
        if not self.grid.is_free(cell):
            raise VisibilityError(f"cell {cell} is not free")
        row = self.flags([self.grid.flat(cell)])[0]
        mask = np.zeros(self.grid.shape, dtype=bool)
        targets = self.offsets[row] + np.asarray(cell)
        mask[targets[:, 0], targets[:, 1]] = True
        return mask

    def visible_set(self, cell: Cell, with_contour: bool = True) -> VisibleSet:
        mask = self.visible_mask(cell)
        mask.setflags(write=False)
        trace = tuple(contour(self.grid, mask)) if with_contour else ()
        return VisibleSet((int(cell[0]), int(cell[1])), mask, trace)


def visible_set(grid: OccupancyGrid, source: Cell, r: float) -> VisibleSet:
    return VisibilityIndex(grid, r).visible_set(source)


# ---------------------------------------------------------------------------
# contours

# clockwise on screen (rows grow downwards), starting north
_MOORE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_FOUR = ((-1, 0), (0, 1), (1, 0), (0, -1))


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Cells of ``mask`` with at least one 4-neighbour outside it (or off the grid)."""
    inner = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    inner[1:-1, 1:-1] = mask
    all_in = inner[:-2, 1:-1] & inner[2:, 1:-1] & inner[1:-1, :-2] & inner[1:-1, 2:]
    return mask & ~all_in


def _trace(mask: np.ndarray, start: Cell, back: Cell) -> list[Cell]:
    h, w = mask.shape

    def inside(cell):
        return 0 <= cell[0] < h and 0 <= cell[1] < w and mask[cell]

    out = [start]
    p, b = start, back
    first_back = back
    for _ in range(8 * int(mask.sum()) + 16):
        k = _MOORE.index((b[0] - p[0], b[1] - p[1]))
        nxt = None
        for i in range(1, 9):
            d = _MOORE[(k + i) % 8]
            q = (p[0] + d[0], p[1] + d[1])
            if inside(q):
                prev = _MOORE[(k + i - 1) % 8]
                nxt, b = q, (p[0] + prev[0], p[1] + prev[1])
                break
        if nxt is None:
            break
        p = nxt
        # Jacob's stopping criterion: re-entering the start the way we first left it
        if p == start and b == first_back:
            break
        out.append(p)
    return out


def contour(grid: OccupancyGrid, cells) -> list[Cell]:
    """Boundary cells of a cell set, ordered by clockwise Moore-neighbour tracing.

    ``cells`` is a :class:`VisibleSet`, a boolean mask or an iterable of cells.
    Tracing starts at the lexicographically smallest boundary cell; boundaries
    not reached by one trace (holes, detached parts) are traced in turn from
    their own smallest remaining cell.
    """
    if isinstance(cells, VisibleSet):
        mask = np.asarray(cells.mask, dtype=bool)
    elif isinstance(cells, np.ndarray) and cells.dtype == bool:
        mask = cells
    else:
        mask = np.zeros(grid.shape, dtype=bool)
        for r, c in cells:
            mask[r, c] = True
    if not mask.any():
        raise ValueError("contour of an empty set")
    boundary = boundary_mask(mask)
    remaining = {(int(r), int(c)) for r, c in np.argwhere(boundary)}
    ordered: list[Cell] = []
    while remaining:
        start = min(remaining)
        back = next(
            (start[0] + d[0], start[1] + d[1])
            for d in ((0, -1), (-1, 0), (0, 1), (1, 0))
            if not (
                0 <= start[0] + d[0] < mask.shape[0]
                and 0 <= start[1] + d[1] < mask.shape[1]
                and mask[start[0] + d[0], start[1] + d[1]]
            )
        )
        for cell in _trace(mask, start, back):
            if cell in remaining:
                remaining.discard(cell)
                ordered.append(cell)
    return ordered
