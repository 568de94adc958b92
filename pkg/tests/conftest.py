import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scanplan.gridmap import FREE, OCCUPIED, OccupancyGrid  # noqa: E402

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _criteria.get(n, (title, "PASS"))[1]
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        _criteria[n] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, status = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d} [{status}] {title}")


def grid_from_rows(rows: list[str], resolution: float = 0.1) -> OccupancyGrid:
    """``.`` free, ``#`` occupied, ``?`` unknown."""
    lut = {".": 0, "#": 1, "?": 2}
    return OccupancyGrid(np.array([[lut[ch] for ch in row] for row in rows], dtype=np.uint8), resolution)


def open_grid(h: int, w: int, resolution: float = 0.1, walls: bool = False) -> OccupancyGrid:
    cells = np.full((h, w), FREE, dtype=np.uint8)
    if walls:
        cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = OCCUPIED
    return OccupancyGrid(cells, resolution)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
