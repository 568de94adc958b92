"""Greedy viewpoint selection for full visibility coverage.

The first viewpoint is the free cell that sees the most.  After that, every
cell on the boundary of the covered region is a candidate; candidates are
scored by how much uncovered space they would add (relative to the best
candidate) minus a penalty that decays with their distance to the nearest
obstacle, and the best one is added until the reachable free space is covered.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .gridmap import Cell, MapError, OccupancyGrid, component_of, distance_field, free_components
from .visibility import CoverageMask, VisibilityIndex, VisibleSet, boundary_mask, coverage_fraction

log = logging.getLogger(__name__)

EXACT_UNIVERSE_LIMIT = 40_000
DEFAULT_STRIDE = 4


def score(setsize: int, maxsize: int, obstacle_distance: float) -> float:
    """Viewpoint score: normalized set size minus ``exp(-distance to nearest obstacle)``."""
    if maxsize <= 0:
        raise ValueError("maxsize must be positive")
    return setsize / maxsize - math.exp(-obstacle_distance)


@dataclass(frozen=True)
class Viewpoint:
    cell: Cell
    visible: VisibleSet = field(repr=False)
    score: float
    newly_covered: int
    # "initial", "contour" or "fallback"
    source: str = "contour"


@dataclass
class ViewpointSet:
    viewpoints: list[Viewpoint]
    mask: CoverageMask
    r: float
    reachable: np.ndarray = field(repr=False)
    warnings: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def cells(self) -> list[Cell]:
        return [vp.cell for vp in self.viewpoints]

    def __len__(self):
        return len(self.viewpoints)

    @property
    def coverage(self) -> float:
        return coverage_fraction(self.mask)

    @property
    def reachable_count(self) -> int:
        return int(np.count_nonzero(self.reachable))

    @property
    def reachable_coverage(self) -> float:
        return int(np.count_nonzero(self.mask.covered & self.reachable)) / self.reachable_count

    @property
    def fallback_used(self) -> list[Cell]:
        return [vp.cell for vp in self.viewpoints if vp.source == "fallback"]


def universe_candidates(
    grid: OccupancyGrid,
    index: VisibilityIndex,
    exact_limit: int = EXACT_UNIVERSE_LIMIT,
    stride: int = DEFAULT_STRIDE,
) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of initial candidates and their visible-set sizes (row-major order)."""
    free_flat = np.flatnonzero(grid.free.ravel())
    if len(free_flat) == 0:
        raise MapError("grid has no free cells")
    if len(free_flat) <= exact_limit:
        sizes = index.universe_sizes().ravel()
        return free_flat, sizes[free_flat]
    rows, cols = np.divmod(free_flat, grid.width)
    lattice = free_flat[(rows % stride == 0) & (cols % stride == 0)]
    if len(lattice) == 0:
        lattice = free_flat
    log.info("universe restricted to %d lattice candidates (stride %d)", len(lattice), stride)
    return lattice, index.sizes_for(lattice)


def select_initial(
    grid: OccupancyGrid,
    r: float,
    index: VisibilityIndex | None = None,
    exact_limit: int = EXACT_UNIVERSE_LIMIT,
    stride: int = DEFAULT_STRIDE,
) -> tuple[Cell, VisibleSet]:
    """The candidate with the largest visible set; ties go to the smallest row-major index."""
    index = index or VisibilityIndex(grid, r)
    cand, sizes = universe_candidates(grid, index, exact_limit, stride)
    best = int(cand[int(np.argmax(sizes))])
    cell = grid.cell_of_flat(best)
    return cell, index.visible_set(cell)


def greedy_cover(
    grid: OccupancyGrid,
    r: float,
    target: float = 1.0,
    *,
    index: VisibilityIndex | None = None,
    exact_limit: int = EXACT_UNIVERSE_LIMIT,
    stride: int = DEFAULT_STRIDE,
) -> ViewpointSet:
    if not (0 < target <= 1):
        raise ValueError(f"coverage target must be in (0, 1], got {target}")
    index = index or VisibilityIndex(grid, r)
    t0 = time.perf_counter()
    dist = distance_field(grid).distance.ravel()
    x0, s0 = select_initial(grid, r, index, exact_limit, stride)
    t1 = time.perf_counter()

    reach = component_of(grid, x0)
    reach_count = int(reach.sum())
    warnings = []
    _, n_comp = free_components(grid)
    if n_comp > 1:
        warnings.append(
            f"{grid.free_count - reach_count} free cells in {n_comp - 1} component(s) "
            f"are not reachable from the first viewpoint {x0}"
        )

    mask = CoverageMask.empty(grid)
    mask.add(s0)
    viewpoints = [Viewpoint(x0, s0, score(s0.size, s0.size, dist[grid.flat(x0)]), s0.size, "initial")]
    w = grid.width
    # cached marginal gains; a selection only changes gains within 2r of it
    gain_cache = np.full(grid.height * w, -1, dtype=np.int64)
    reach_r = int(math.ceil(2 * index.rc)) + 1

    def reached() -> float:
        return int(np.count_nonzero(mask.covered & reach)) / reach_count

    while reached() < target - 1e-12:
        uncovered = reach & ~mask.covered
        unc_p = index.pad_mask(uncovered)
        cand = np.flatnonzero(boundary_mask(mask.covered).ravel())
        stale = cand[gain_cache[cand] < 0]
        if len(stale):
            gain_cache[stale] = index.gains(stale, unc_p)
        gains = gain_cache[cand]
        source = "contour"
        if gains.max(initial=0) <= 0:
            # nothing on the boundary adds coverage: restart from any uncovered reachable cell
            cand = np.flatnonzero(uncovered.ravel())
            gains = index.gains(cand, unc_p)
            source = "fallback"
            if gains.max(initial=0) <= 0:
                warnings.append("greedy loop stalled before reaching the coverage target")
                break
        keep = gains > 0
        cand, gains = cand[keep], gains[keep]
        phi = gains / gains.max() - np.exp(-dist[cand])
        j = int(np.argmax(phi))
        cell = grid.cell_of_flat(int(cand[j]))
        vs = index.visible_set(cell)
        newly = mask.add(vs)
        if newly != gains[j]:
            raise AssertionError(f"gain bookkeeping mismatch at {cell}: {newly} != {gains[j]}")
        viewpoints.append(Viewpoint(cell, vs, float(phi[j]), newly, source))
        if source == "fallback":
            log.warning("fallback viewpoint %s used", cell)
        r0, c0 = cell
        box = np.zeros(grid.shape, dtype=bool)
        box[max(0, r0 - reach_r) : r0 + reach_r + 1, max(0, c0 - reach_r) : c0 + reach_r + 1] = True
        gain_cache[box.ravel()] = -1

    t2 = time.perf_counter()
    result = ViewpointSet(viewpoints, mask, r, reach, warnings, {"universe": t1 - t0, "greedy": t2 - t1})
    log.info(
        "greedy cover: %d viewpoints, coverage %.4f (reachable %.4f)",
        len(viewpoints), result.coverage, result.reachable_coverage,
    )
    return result


def recompute_mask(grid: OccupancyGrid, cells: list[Cell], r: float) -> CoverageMask:
    """Coverage of ``cells`` from scratch, independent of any greedy bookkeeping."""
    index = VisibilityIndex(grid, r)
    mask = CoverageMask.empty(grid)
    for cell in cells:
        mask.covered |= index.visible_mask(cell)
    return mask


def viewpoints_to_dict(vs: ViewpointSet, grid: OccupancyGrid) -> dict:
    return {
        "viewpoints": [
            {
                "index": list(vp.cell),
                "world_xy": list(grid.cell_to_world(vp.cell)),
                "score": vp.score,
                "newly_covered": vp.newly_covered,
                "source": vp.source,
            }
            for vp in vs.viewpoints
        ],
        "sensor_range_m": vs.r,
        "covered_count": vs.mask.covered_count,
        "free_count": vs.mask.free_count,
        "reachable_count": vs.reachable_count,
        "coverage": vs.coverage,
        "reachable_coverage": vs.reachable_coverage,
        "fallback_used": [list(c) for c in vs.fallback_used],
        "warnings": list(vs.warnings),
    }
