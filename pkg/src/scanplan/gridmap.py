"""Three-class occupancy grids: loading, saving, inflation and distance fields.

Cells are stored in image order: row 0 is the top row of the map image.
World coordinates follow the robot map-server convention, where ``origin``
is the world pose of the lower-left corner of the map.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml
from scipy import ndimage

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_RESOLUTION = 0.05
DEFAULT_INFLATION = 0.3


class CellClass(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


FREE = CellClass.FREE
OCCUPIED = CellClass.OCCUPIED
UNKNOWN = CellClass.UNKNOWN

# pixel values used when writing maps; they round-trip through the default thresholds
_PIXEL_OF = {FREE: 255, OCCUPIED: 0, UNKNOWN: 128}
_CHAR_OF = {FREE: ".", OCCUPIED: "#", UNKNOWN: "?"}
_CLASS_OF_CHAR = {v: k for k, v in _CHAR_OF.items()}


class MapError(ValueError):
    """Raised for malformed map images, metadata or grids."""


Cell = tuple[int, int]


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    cells: np.ndarray
    resolution: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # obstacle mask before any inflation; inflation always grows from this
    base_blocked: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.uint8, copy=True)
        if cells.ndim != 2 or cells.size == 0:
            raise MapError(f"grid must be a non-empty 2D array, got shape {cells.shape}")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise MapError(f"resolution must be positive, got {self.resolution}")
        if cells.max() > UNKNOWN:
            raise MapError("cell values must be FREE(0), OCCUPIED(1) or UNKNOWN(2)")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "resolution", float(self.resolution))
        ox, oy, *rest = self.origin
        object.__setattr__(self, "origin", (float(ox), float(oy), float(rest[0]) if rest else 0.0))
        base = self.blocked if self.base_blocked is None else np.array(self.base_blocked, dtype=bool)
        if base.shape != cells.shape:
            raise MapError("base_blocked shape does not match the grid")
        base.setflags(write=False)
        object.__setattr__(self, "base_blocked", base)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def free(self) -> np.ndarray:
        return self.cells == FREE

    @property
    def blocked(self) -> np.ndarray:
        return self.cells != FREE

    @property
    def free_count(self) -> int:
        return int(np.count_nonzero(self.cells == FREE))

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and self.cells[cell] == FREE

    def flat(self, cell: Cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell_of_flat(self, index: int) -> Cell:
        return divmod(int(index), self.width)

    def cell_to_world(self, cell: Cell) -> tuple[float, float]:
        r, c = cell
        ox, oy, _ = self.origin
        return (ox + (c + 0.5) * self.resolution, oy + (self.height - r - 0.5) * self.resolution)

    def world_to_cell(self, xy: tuple[float, float]) -> Cell:
        ox, oy, _ = self.origin
        c = math.floor((xy[0] - ox) / self.resolution)
        r = self.height - 1 - math.floor((xy[1] - oy) / self.resolution)
        return (r, c)

    def free_cells(self) -> Iterator[Cell]:
        for r, c in np.argwhere(self.free):
            yield (int(r), int(c))

    def with_cells(self, cells: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(cells, self.resolution, self.origin, base_blocked=self.base_blocked)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None


@dataclass(frozen=True)
class MapMeta:
    resolution: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    negate: bool = False
    occupied_thresh: float = 0.65
    free_thresh: float = 0.25
    image: str = "map.pgm"

    def validate(self):
        if not (self.resolution > 0):
            raise MapError(f"resolution must be positive, got {self.resolution}")
        if self.free_thresh > self.occupied_thresh:
            raise MapError(
                f"free_thresh {self.free_thresh} exceeds occupied_thresh {self.occupied_thresh}"
            )
        if len(self.origin) < 2:
            raise MapError("origin needs at least [x, y]")


# ---------------------------------------------------------------------------
# PGM codec


_PGM_TOKEN = re.compile(rb"#[^\n]*\n?|\S+")


def _pgm_tokens(data: bytes, start: int, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    out = []
    pos = start
    while len(out) < count:
        m = _PGM_TOKEN.search(data, pos)
        if m is None:
            raise MapError("truncated PGM header")
        pos = m.end()
        tok = m.group()
        if not tok.startswith(b"#"):
            out.append(tok)
    return out, pos


def read_pgm(data: bytes) -> np.ndarray:
    if len(data) < 2 or data[:2] not in (b"P5", b"P2"):
        raise MapError("not a PGM image (expected P5 or P2 magic)")
    magic = data[:2]
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 2, 3)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise MapError(f"bad PGM header: {exc}") from None
    if w <= 0 or h <= 0:
        raise MapError(f"bad PGM dimensions {w}x{h}")
    if maxval != 255:
        raise MapError(f"only 8-bit PGM is supported (maxval {maxval})")
    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        raster = data[pos + 1 : pos + 1 + w * h]
        if len(raster) != w * h:
            raise MapError(f"PGM raster truncated: {len(raster)} of {w * h} bytes")
        return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
    values = [int(t) for t in data[pos:].split() if not t.startswith(b"#")]
    if len(values) < w * h:
        raise MapError(f"PGM raster truncated: {len(values)} of {w * h} values")
    arr = np.asarray(values[: w * h])
    if arr.min() < 0 or arr.max() > 255:
        raise MapError("PGM values out of range")
    return arr.astype(np.uint8).reshape(h, w)


def write_pgm(image: np.ndarray, binary: bool = True) -> bytes:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    if binary:
        return b"P5\n%d %d\n255\n" % (w, h) + image.tobytes()
    lines = [b"P2", b"%d %d" % (w, h), b"255"]
    lines += [b" ".join(b"%d" % v for v in row) for row in image]
    return b"\n".join(lines) + b"\n"


# ---------------------------------------------------------------------------
# load / save


def classify_pixels(image: np.ndarray, meta: MapMeta) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise MapError("map image must be a 2D 8-bit grayscale raster")
    meta.validate()
    p = image.astype(np.float64)
    occ = p / 255.0 if meta.negate else (255.0 - p) / 255.0
    cells = np.full(image.shape, UNKNOWN, dtype=np.uint8)
    cells[occ >= meta.occupied_thresh] = OCCUPIED
    cells[occ <= meta.free_thresh] = FREE
    return cells


def load_map(image_bytes: bytes | np.ndarray, meta: MapMeta) -> OccupancyGrid:
    """Build a grid from a grayscale raster (PGM bytes or an array) and its metadata."""
    image = read_pgm(image_bytes) if isinstance(image_bytes, (bytes, bytearray)) else image_bytes
    cells = classify_pixels(image, meta)
    return OccupancyGrid(cells, meta.resolution, tuple(meta.origin))


def read_meta(path: str | Path) -> MapMeta:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise MapError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise MapError(f"{path}: expected a mapping")
    missing = {"image", "resolution"} - data.keys()
    if missing:
        raise MapError(f"{path}: missing keys {sorted(missing)}")
    origin = data.get("origin", [0.0, 0.0, 0.0])
    meta = MapMeta(
        resolution=float(data["resolution"]),
        origin=tuple(float(v) for v in origin),
        negate=bool(int(data.get("negate", 0))),
        occupied_thresh=float(data.get("occupied_thresh", 0.65)),
        free_thresh=float(data.get("free_thresh", 0.25)),
        image=str(data["image"]),
    )
    meta.validate()
    return meta


def load_map_file(yaml_path: str | Path) -> OccupancyGrid:
    yaml_path = Path(yaml_path)
    meta = read_meta(yaml_path)
    image_path = Path(meta.image)
    if not image_path.is_absolute():
        image_path = yaml_path.parent / image_path
    return load_map(image_path.read_bytes(), meta)


def to_image(grid: OccupancyGrid) -> np.ndarray:
    image = np.empty(grid.shape, dtype=np.uint8)
    for cls, px in _PIXEL_OF.items():
        image[grid.cells == cls] = px
    return image


def save_map(grid: OccupancyGrid, yaml_path: str | Path, binary: bool = True) -> Path:
    """Write ``<name>.pgm`` next to ``yaml_path`` plus the YAML sidecar."""
    yaml_path = Path(yaml_path)
    image_path = yaml_path.with_suffix(".pgm")
    image_path.write_bytes(write_pgm(to_image(grid), binary=binary))
    meta = {
        "image": image_path.name,
        "resolution": grid.resolution,
        "origin": list(grid.origin),
        "negate": 0,
        "occupied_thresh": 0.65,
        "free_thresh": 0.25,
    }
    yaml_path.write_text(yaml.safe_dump(meta, sort_keys=False))
    return image_path


def grid_to_dict(grid: OccupancyGrid) -> dict:
    lut = np.array([_CHAR_OF[FREE], _CHAR_OF[OCCUPIED], _CHAR_OF[UNKNOWN]])
    return {
        "schema_version": SCHEMA_VERSION,
        "width": grid.width,
        "height": grid.height,
        "resolution": grid.resolution,
        "origin": list(grid.origin),
        "rows": ["".join(row) for row in lut[grid.cells]],
    }


def grid_from_dict(data: dict) -> OccupancyGrid:
    rows = data["rows"]
    if len(rows) != data["height"] or any(len(row) != data["width"] for row in rows):
        raise MapError("grid JSON dimensions do not match its rows")
    try:
        cells = np.array([[_CLASS_OF_CHAR[ch] for ch in row] for row in rows], dtype=np.uint8)
    except KeyError as exc:
        raise MapError(f"unknown cell character {exc}") from None
    return OccupancyGrid(cells, data["resolution"], tuple(data["origin"]))


def grid_to_json(grid: OccupancyGrid) -> str:
    return json.dumps(grid_to_dict(grid), indent=1)


def grid_from_json(text: str) -> OccupancyGrid:
    return grid_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# preprocessing


def inflate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Mark every free cell within ``radius`` meters of an obstacle cell center as occupied.

    Distances are measured from the grid's original (pre-inflation) obstacles, so
    inflating twice with the same radius is a no-op.
    """
    if radius < 0:
        raise ValueError(f"inflation radius must be >= 0, got {radius}")
    if radius == 0 or not grid.base_blocked.any():
        return grid
    dist = ndimage.distance_transform_edt(~grid.base_blocked) * grid.resolution
    grow = grid.free & (dist <= radius + 1e-9)
    cells = np.array(grid.cells)
    cells[grow] = OCCUPIED
    return grid.with_cells(cells)


@dataclass(frozen=True)
class ObstacleDistanceField:
    """Meters from each free cell center to the nearest non-free cell center.

    Non-free cells hold 0. ``has_obstacles`` is False when the grid has no
    obstacle cell at all, in which case every distance is +inf.
    """

    distance: np.ndarray
    has_obstacles: bool

    def __getitem__(self, cell: Cell) -> float:
        return float(self.distance[cell])


def distance_field(grid: OccupancyGrid) -> ObstacleDistanceField:
    blocked = grid.blocked
    if not blocked.any():
        log.warning("grid has no obstacle cells; obstacle distances are infinite")
        dist = np.full(grid.shape, np.inf)
        dist.setflags(write=False)
        return ObstacleDistanceField(dist, False)
    # exact Euclidean transform; only free cells are nonzero
    dist = ndimage.distance_transform_edt(~blocked) * grid.resolution
    dist.setflags(write=False)
    return ObstacleDistanceField(dist, True)


def free_components(grid: OccupancyGrid) -> tuple[np.ndarray, int]:
    """4-connected labelling of free space (0 = not free)."""
    labels, n = ndimage.label(grid.free)
    return labels, int(n)


def component_of(grid: OccupancyGrid, cell: Cell) -> np.ndarray:
    labels, _ = free_components(grid)
    if labels[cell] == 0:
        raise MapError(f"cell {cell} is not free")
    return labels == labels[cell]
