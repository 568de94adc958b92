"""Deterministic SVG rendering of a plan: map, covered area, viewpoints, Steiner stops and path."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .gridmap import FREE, OCCUPIED, UNKNOWN, Cell, OccupancyGrid

LAYERS = ("grid", "covered", "viewpoints", "steiner", "path")

CLASS_COLORS = {OCCUPIED: "#000000", FREE: "#ffffff", UNKNOWN: "#808080"}
COVERED_COLOR = "#ffe14d"
VIEWPOINT_COLOR = "#e02020"
STEINER_COLOR = "#ffd000"
PATH_COLOR = "#20a020"


def parse_layers(text: str | None) -> tuple[str, ...]:
    """Comma-separated layer list; ``None`` or ``all`` selects every layer."""
    if text is None or text.strip() in ("", "all"):
        return LAYERS
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [n for n in names if n not in LAYERS]
    if bad:
        raise ValueError(f"unknown SVG layer(s) {', '.join(bad)}; choose from {', '.join(LAYERS)}")
    return names


def default_scale(grid: OccupancyGrid, max_px: int = 1000) -> float:
    return max(1.0, min(8.0, max_px / max(grid.width, grid.height)))


def world_to_canvas(grid: OccupancyGrid, xy: tuple[float, float], scale: float) -> tuple[float, float]:
    """Affine map from world meters to SVG pixels (y axis flipped, row 0 at the top)."""
    ox, oy = grid.origin[0], grid.origin[1]
    u = (xy[0] - ox) / grid.resolution * scale
    v = (grid.height - (xy[1] - oy) / grid.resolution) * scale
    return u, v


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _runs(mask_row: np.ndarray) -> list[tuple[int, int]]:
    x = np.concatenate(([0], mask_row.astype(np.int8), [0]))
    d = np.diff(x)
    return list(zip(np.flatnonzero(d == 1).tolist(), np.flatnonzero(d == -1).tolist()))


def _rects(mask: np.ndarray, scale: float, fill: str, css: str) -> list[str]:
    out = []
    for r in range(mask.shape[0]):
        for a, b in _runs(mask[r]):
            out.append(
                f'<rect class="{css}" x="{_f(a * scale)}" y="{_f(r * scale)}" '
                f'width="{_f((b - a) * scale)}" height="{_f(scale)}" fill="{fill}"/>'
            )
    return out


def render_svg(
    grid: OccupancyGrid,
    *,
    covered: np.ndarray | None = None,
    viewpoints: Iterable[Cell] = (),
    steiner: Iterable[Cell] = (),
    path: Sequence[Cell] = (),
    layers: Sequence[str] = LAYERS,
    scale: float | None = None,
) -> str:
    scale = default_scale(grid) if scale is None else scale
    w, h = grid.width * scale, grid.height * scale
    dot = max(2.0, 0.8 * scale)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
        f'viewBox="0 0 {_f(w)} {_f(h)}">',
    ]

    def group(name: str, body: list[str]):
        lines.append(f'<g id="{name}">')
        lines.extend(body)
        lines.append("</g>")

    def center(cell: Cell) -> tuple[float, float]:
        return world_to_canvas(grid, grid.cell_to_world(cell), scale)

    if "grid" in layers:
        body = []
        for cls in (FREE, OCCUPIED, UNKNOWN):
            body += _rects(grid.cells == cls, scale, CLASS_COLORS[cls], f"cell-{cls}")
        group("grid", body)
    if "covered" in layers and covered is not None:
        group("covered", _rects(covered & grid.free, scale, COVERED_COLOR, "covered"))
    if "path" in layers and len(path) > 1:
        pts = " ".join(f"{_f(u)},{_f(v)}" for u, v in map(center, path))
        group(
            "path",
            [
                f'<polyline class="path" points="{pts}" fill="none" stroke="{PATH_COLOR}" '
                f'stroke-width="{_f(max(1.0, 0.4 * scale))}"/>'
            ],
        )
    if "viewpoints" in layers:
        body = []
        for cell in viewpoints:
            u, v = center(cell)
            body.append(f'<circle class="viewpoint" cx="{_f(u)}" cy="{_f(v)}" r="{_f(dot)}" fill="{VIEWPOINT_COLOR}"/>')
        group("viewpoints", body)
    if "steiner" in layers:
        body = []
        for cell in steiner:
            u, v = center(cell)
            body.append(
                f'<circle class="steiner" cx="{_f(u)}" cy="{_f(v)}" r="{_f(dot)}" '
                f'fill="{STEINER_COLOR}" stroke="#000000" stroke-width="{_f(max(0.5, 0.15 * scale))}"/>'
            )
        group("steiner", body)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
