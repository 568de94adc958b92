"""Command line driver: plan, compare against the sweep baseline, render, generate worlds.

Exit codes: 0 success, 2 coverage below target (including unreachable free
space), 3 tour legs that cannot be repaired, 4 input/output problems,
5 invalid configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bcd import bcd_plan, sweep_to_dict
from .coverage import EXACT_UNIVERSE_LIMIT, greedy_cover, recompute_mask, viewpoints_to_dict
from .gridmap import (
    SCHEMA_VERSION,
    MapError,
    OccupancyGrid,
    free_components,
    grid_from_json,
    grid_to_json,
    inflate,
    load_map_file,
    save_map,
)
from .pathplan import PathError, tour_path_length
from .render import parse_layers, render_svg
from .tour import StrandedTourError, plan_tour, tour_to_dict
from .visibility import VisibilityIndex
from .worlds import WorldRecipe, generate_world

log = logging.getLogger("scanplan")

EXIT_OK = 0
EXIT_COVERAGE = 2
EXIT_STRANDED = 3
EXIT_IO = 4
EXIT_CONFIG = 5


class ConfigError(ValueError):
    pass


class PlanFailure(RuntimeError):
    """A planning stage failed; ``code`` is the process exit status."""

    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.code = code


@dataclass
class PlanConfig:
    sensor_range_r: float = 2.0
    r_relaxed_factor: float = 1.5
    eta: float = 0.96
    inflation_radius: float = 0.3
    coverage_target: float = 1.0
    candidate_stride: int = 4
    exact_universe_limit: int = EXACT_UNIVERSE_LIMIT
    seed: int = 0
    close_loop: bool = False
    # sweep baseline lane spacing; None means the sensor range
    lane_spacing: float | None = None

    def validate(self) -> "PlanConfig":
        if not self.sensor_range_r > 0:
            raise ConfigError(f"sensor_range_r must be positive, got {self.sensor_range_r}")
        if not self.r_relaxed_factor >= 1:
            raise ConfigError(f"r_relaxed_factor must be at least 1, got {self.r_relaxed_factor}")
        if not 0 <= self.eta < 1:
            raise ConfigError(f"eta must be in [0, 1), got {self.eta}")
        if not self.inflation_radius >= 0:
            raise ConfigError(f"inflation_radius must be non-negative, got {self.inflation_radius}")
        if not 0 < self.coverage_target <= 1:
            raise ConfigError(f"coverage_target must be in (0, 1], got {self.coverage_target}")
        if self.candidate_stride < 1:
            raise ConfigError(f"candidate_stride must be at least 1, got {self.candidate_stride}")
        if self.lane_spacing is not None and not self.lane_spacing > 0:
            raise ConfigError(f"lane_spacing must be positive, got {self.lane_spacing}")
        return self

    @property
    def lane_spacing_m(self) -> float:
        return self.sensor_range_r if self.lane_spacing is None else self.lane_spacing

    def updated(self, values: dict) -> "PlanConfig":
        types = {f.name: f.type for f in dataclasses.fields(self)}
        out = {}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            out[key] = _coerce(key, raw, types[key])
        return dataclasses.replace(self, **out)

    @classmethod
    def from_text(cls, text: str, base: "PlanConfig | None" = None) -> "PlanConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"config line {n}: expected key = value")
            values[key.strip()] = value.strip()
        return (base or cls()).updated(values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(key: str, raw, typ: str):
    if not isinstance(raw, str):
        return raw
    try:
        if typ == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if raw.lower() == "none" and "None" in typ:
            return None
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


@dataclass
class MetricsReport:
    coverage_percent: float
    viewpoint_count: int
    path_length_m: float
    infeasible_edges_repaired: int
    detour_choices: dict[str, int]
    steiner_count: int = 0
    covered_cells: int = 0
    free_cells: int = 0
    reachable_cells: int = 0
    tour_euclidean_length_m: float = 0.0
    planning_time_s: dict[str, float] = field(default_factory=dict)

    def to_dict(self, with_timing: bool = False) -> dict:
        d = dataclasses.asdict(self)
        timing = d.pop("planning_time_s")
        d = {"schema_version": SCHEMA_VERSION, **d}
        if with_timing:
            d["planning_time_s"] = timing
        return d


@dataclass
class PlanResult:
    grid: OccupancyGrid
    config: PlanConfig
    metrics: MetricsReport
    viewpoints: dict
    tour: dict
    covered: np.ndarray
    viewpoint_cells: list
    steiner_cells: list
    path_cells: list
    warnings: list[str] = field(default_factory=list)


def prepare_grid(grid: OccupancyGrid, config: PlanConfig) -> OccupancyGrid:
    return inflate(grid, config.inflation_radius)


def _components_message(grid: OccupancyGrid, reachable: np.ndarray) -> str | None:
    labels, n = free_components(grid)
    if n <= 1:
        return None
    parts = []
    for k in range(1, n + 1):
        comp = labels == k
        if (comp & reachable).any():
            continue
        r, c = map(int, np.argwhere(comp)[0])
        parts.append(f"component {k} ({int(comp.sum())} cells, first cell ({r}, {c}))")
    return "free space is disconnected; unreachable: " + "; ".join(parts)


def run_plan(grid: OccupancyGrid, config: PlanConfig) -> PlanResult:
    """Greedy cover, tour repair and A* validation on an already inflated grid."""
    r = config.sensor_range_r
    timings = {}
    t = time.perf_counter()
    index = VisibilityIndex(grid, r)
    try:
        vs = greedy_cover(
            grid, r, config.coverage_target,
            index=index, exact_limit=config.exact_universe_limit, stride=config.candidate_stride,
        )
    except MapError as exc:
        raise PlanFailure("coverage", str(exc), EXIT_COVERAGE) from None
    timings.update(vs.timings)
    try:
        planned = plan_tour(grid, vs.cells, r, config.eta, config.r_relaxed_factor, config.close_loop)
    except StrandedTourError as exc:
        raise PlanFailure("tour", str(exc), EXIT_STRANDED) from None
    timings.update({"graph_build": planned.timings["graphs"], "tsp": planned.timings["tsp"],
                    "repair": planned.timings["repair"]})
    tour = planned.tour
    t0 = time.perf_counter()
    try:
        length, legs = tour_path_length(grid, tour.cells)
    except PathError as exc:
        raise PlanFailure("path", str(exc), EXIT_STRANDED) from None
    timings["astar"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t

    used = sorted(set(tour.sequence))
    all_cells = [tour.nodes[i].cell for i in used]
    covered = recompute_mask(grid, all_cells, r).covered
    steiner = [tour.nodes[i].cell for i in used if tour.nodes[i].kind == "steiner"]
    choices = {"visibility": 0, "roadmap": 0}
    for rep in tour.repairs:
        choices[rep["chosen"]] += 1
    metrics = MetricsReport(
        coverage_percent=100.0 * int(covered.sum()) / grid.free_count,
        viewpoint_count=tour.unique_nodes,
        path_length_m=length,
        infeasible_edges_repaired=len(tour.repairs),
        detour_choices=choices,
        steiner_count=len(steiner),
        covered_cells=int(covered.sum()),
        free_cells=grid.free_count,
        reachable_cells=vs.reachable_count,
        tour_euclidean_length_m=tour.total_length,
        planning_time_s=timings,
    )
    tour_d = tour_to_dict(tour, grid)
    tour_d["schema_version"] = SCHEMA_VERSION
    tour_d["path_length_m"] = length
    tour_d["paths"] = [[list(c) for c in leg.cells] for leg in legs]
    vp_d = {"schema_version": SCHEMA_VERSION, **viewpoints_to_dict(vs, grid)}
    path = [tour.cells[0]] + [c for leg in legs for c in leg.cells[1:]]
    warnings = list(vs.warnings)
    msg = _components_message(grid, vs.reachable)
    if msg:
        warnings.append(msg)
    return PlanResult(grid, config, metrics, vp_d, tour_d, covered, vs.cells, steiner, path, warnings)


def run_baseline(grid: OccupancyGrid, config: PlanConfig) -> PlanResult:
    r = config.sensor_range_r
    t = time.perf_counter()
    plan = bcd_plan(grid, r, config.lane_spacing_m)
    t1 = time.perf_counter()
    length, legs = tour_path_length(grid, plan.viewpoints)
    t2 = time.perf_counter()
    covered = recompute_mask(grid, plan.viewpoints, r).covered
    metrics = MetricsReport(
        coverage_percent=100.0 * int(covered.sum()) / grid.free_count,
        viewpoint_count=len(set(plan.viewpoints)),
        path_length_m=length,
        infeasible_edges_repaired=0,
        detour_choices={"visibility": 0, "roadmap": 0},
        covered_cells=int(covered.sum()),
        free_cells=grid.free_count,
        reachable_cells=grid.free_count,
        tour_euclidean_length_m=plan.trajectory_length,
        planning_time_s={"sweep": t1 - t, "astar": t2 - t1, "total": t2 - t},
    )
    sweep = {"schema_version": SCHEMA_VERSION, **sweep_to_dict(plan, grid)}
    tour_d = {
        "schema_version": SCHEMA_VERSION,
        "sequence": list(range(len(plan.viewpoints))),
        "path_length_m": length,
        "paths": [[list(c) for c in leg.cells] for leg in legs],
    }
    path = [plan.viewpoints[0]] + [c for leg in legs for c in leg.cells[1:]]
    return PlanResult(grid, config, metrics, sweep, tour_d, covered, list(plan.viewpoints), [], path)


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=False) + "\n")


def write_artifacts(result: PlanResult, out: Path, layers=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "viewpoints.json", result.viewpoints)
    _dump(out / "tour.json", result.tour)
    _dump(out / "metrics.json", result.metrics.to_dict())
    # wall-clock times are kept apart so the other artifacts stay reproducible
    _dump(out / "timing.json", {"schema_version": SCHEMA_VERSION, "planning_time_s": result.metrics.planning_time_s})
    (out / "grid.json").write_text(grid_to_json(result.grid) + "\n")
    (out / "plan.svg").write_text(render_from_result(result, layers))


def render_from_result(result: PlanResult, layers=None) -> str:
    return render_svg(
        result.grid,
        covered=result.covered,
        viewpoints=result.viewpoint_cells,
        steiner=result.steiner_cells,
        path=result.path_cells,
        layers=parse_layers(layers),
    )


def render_artifacts(directory: Path, layers=None) -> str:
    """SVG rebuilt from the JSON artifacts of a ``plan`` run."""
    try:
        grid = grid_from_json((directory / "grid.json").read_text())
        vp = json.loads((directory / "viewpoints.json").read_text())
        tour = json.loads((directory / "tour.json").read_text())
    except FileNotFoundError as exc:
        raise MapError(f"missing artifact {exc.filename}") from None
    nodes = tour.get("nodes")
    if nodes is None:
        # sweep baseline artifacts
        cells = [tuple(v["index"]) for v in vp["viewpoints"]]
        steiner = []
        r = tour.get("sensor_range_m", vp.get("sensor_range_m"))
    else:
        cells = [tuple(n["cell"]) for n in nodes if n["kind"] == "viewpoint"]
        steiner = [tuple(n["cell"]) for n in nodes if n["kind"] == "steiner"]
        r = vp["sensor_range_m"]
    covered = None
    if r is not None:
        covered = recompute_mask(grid, cells + steiner, r).covered
    paths = tour.get("paths") or []
    path = [tuple(paths[0][0])] + [tuple(c) for p in paths for c in p[1:]] if paths else []
    return render_svg(grid, covered=covered, viewpoints=cells, steiner=steiner, path=path,
                      layers=parse_layers(layers))


# ---------------------------------------------------------------------------
# argument handling


def load_input(args, config: PlanConfig) -> OccupancyGrid:
    if bool(args.map) == bool(args.recipe):
        raise ConfigError("give exactly one of --map or --recipe")
    if args.recipe:
        try:
            return generate_world(WorldRecipe.parse(args.recipe, seed=config.seed))
        except MapError as exc:
            raise ConfigError(str(exc)) from None
    path = Path(args.map)
    if path.suffix == ".json":
        return grid_from_json(path.read_text())
    return load_map_file(path)


def load_config(args) -> PlanConfig:
    config = PlanConfig()
    if getattr(args, "config", None):
        config = PlanConfig.from_text(Path(args.config).read_text(), config)
    overrides = {
        "sensor_range_r": getattr(args, "r", None),
        "eta": getattr(args, "eta", None),
        "inflation_radius": getattr(args, "inflate", None),
        "coverage_target": getattr(args, "target", None),
        "seed": getattr(args, "seed", None),
    }
    return config.updated(overrides).validate()


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--map", help="map YAML sidecar (with its PGM) or grid JSON")
    p.add_argument("--recipe", help="synthetic world, e.g. rooms or rooms:200x200")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--r", type=float, help="sensor range in meters")
    p.add_argument("--eta", type=float, help="detour weight between length and added viewpoints")
    p.add_argument("--inflate", type=float, help="obstacle inflation radius in meters")
    p.add_argument("--target", type=float, help="coverage target in (0, 1]")
    p.add_argument("--svg-layers", help="comma-separated SVG layers (default all)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scanplan", description="Panoramic scan view planning on occupancy grids.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("plan", help="select viewpoints and plan the tour"))
    _add_common(sub.add_parser("compare", help="run the planner and the sweep baseline"))
    p = sub.add_parser("render", help="render plan artifacts to SVG")
    p.add_argument("artifacts", help="directory written by plan")
    p.add_argument("--out", help="SVG path (default <artifacts>/plan.svg)")
    p.add_argument("--svg-layers")
    p = sub.add_parser("gen-world", help="write a synthetic world as PGM + YAML")
    p.add_argument("--recipe", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="world.yaml", help="YAML path; the PGM is written beside it")
    return parser


def _shortfall(result: PlanResult) -> str | None:
    target = 100.0 * result.config.coverage_target
    if result.metrics.coverage_percent + 1e-9 >= target:
        return None
    msg = f"coverage {result.metrics.coverage_percent:.4f}% below target {target:.4f}%"
    comp = [w for w in result.warnings if w.startswith("free space is disconnected")]
    return f"{msg}; {comp[0]}" if comp else msg


def cmd_plan(args) -> int:
    config = load_config(args)
    grid = prepare_grid(load_input(args, config), config)
    result = run_plan(grid, config)
    out = Path(args.out)
    write_artifacts(result, out, args.svg_layers)
    for w in result.warnings:
        log.warning(w)
    m = result.metrics
    print(f"viewpoints {m.viewpoint_count}  coverage {m.coverage_percent:.2f}%  path {m.path_length_m:.2f} m  -> {out}")
    short = _shortfall(result)
    if short:
        print(f"error: {short}", file=sys.stderr)
        return EXIT_COVERAGE
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_config(args)
    grid = prepare_grid(load_input(args, config), config)
    ours = run_plan(grid, config)
    bcd = run_baseline(grid, config)
    out = Path(args.out)
    write_artifacts(ours, out / "ours", args.svg_layers)
    write_artifacts(bcd, out / "bcd", args.svg_layers)
    a, b = ours.metrics, bcd.metrics
    ratios = {
        key: (getattr(a, key) / getattr(b, key) if getattr(b, key) else None)
        for key in ("viewpoint_count", "path_length_m", "coverage_percent")
    }
    _dump(out / "compare.json", {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "ours": a.to_dict(),
        "bcd": b.to_dict(),
        "ratio_ours_over_bcd": ratios,
    })
    print(f"{'':12s}{'viewpoints':>12s}{'coverage %':>12s}{'path m':>10s}")
    for name, m in (("ours", a), ("bcd", b)):
        print(f"{name:12s}{m.viewpoint_count:12d}{m.coverage_percent:12.2f}{m.path_length_m:10.1f}")
    short = _shortfall(ours)
    if short:
        print(f"error: {short}", file=sys.stderr)
        return EXIT_COVERAGE
    return EXIT_OK


def cmd_render(args) -> int:
    directory = Path(args.artifacts)
    out = Path(args.out) if args.out else directory / "plan.svg"
    out.write_text(render_artifacts(directory, args.svg_layers))
    return EXIT_OK


def cmd_gen_world(args) -> int:
    try:
        grid = generate_world(WorldRecipe.parse(args.recipe, seed=args.seed))
    except MapError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_map(grid, out)
    print(f"{grid.width}x{grid.height} world, {grid.free_count} free cells -> {out}")
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "compare": cmd_compare, "render": cmd_render, "gen-world": cmd_gen_world}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except PlanFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # remaining argument problems, e.g. an unknown SVG layer
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
