import sys
from collections import deque
from importlib import resources

import numpy as np
import pytest
from hypothesis import strategies as st

from patrolroute.terrain import GridMap, load_map, skeletonize


def lattice(rows, cols, crime=None, road=None, zone=None):
    road = np.ones((rows, cols), bool) if road is None else np.asarray(road, bool)
    crime = np.zeros((rows, cols), int) if crime is None else np.asarray(crime, int).reshape(rows, cols)
    return GridMap.from_arrays(road, crime, zone)


def bfs_oracle(grid: GridMap):
    """All-pairs hop distances computed straight from the grid (row-major road ids)."""
    cells = [(r, c) for r in range(grid.rows) for c in range(grid.cols) if grid.cell(r, c).has_road]
    index = {rc: i for i, rc in enumerate(cells)}
    n = len(cells)
    dist = np.full((n, n), -1, dtype=np.int64)
    for s, start in enumerate(cells):
        dist[s, s] = 0
        q = deque([start])
        while q:
            r, c = q.popleft()
            for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                j = index.get((nr, nc))
                if j is not None and dist[s, j] < 0:
                    dist[s, j] = dist[s, index[(r, c)]] + 1
                    q.append((nr, nc))
    return dist


@st.composite
def grids(draw, max_side=7, min_roads=1):
    rows = draw(st.integers(1, max_side))
    cols = draw(st.integers(1, max_side))
    n = rows * cols
    road = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    if sum(road) < min_roads:
        road = [True] * n
    crime = draw(st.lists(st.integers(0, 30), min_size=n, max_size=n))
    zone = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    return GridMap.from_arrays(np.reshape(road, (rows, cols)), np.reshape(crime, (rows, cols)), np.reshape(zone, (rows, cols)))


def bundled(name):
    with resources.as_file(resources.files("patrolroute") / "data" / f"{name}.json") as p:
        return load_map(p)


@pytest.fixture(scope="session")
def city20():
    return skeletonize(bundled("city20"))


@pytest.fixture(scope="session")
def city10():
    return skeletonize(bundled("city10"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    RESULTS = mod.RESULTS
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
