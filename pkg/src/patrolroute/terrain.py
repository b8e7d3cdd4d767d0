"""Grid maps, their skeleton graphs, synthetic map generation and map files."""

from __future__ import annotations

import json
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from patrolroute.config import SyntheticSpec
from patrolroute.errors import (
    EmptyGraph,
    InvalidSpec,
    InvariantViolation,
    ParseError,
    UnknownNode,
)

UNREACHABLE = None

# 4-neighborhood offsets in the fixed order up, down, left, right
DIRECTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class Cell(NamedTuple):
    has_road: bool
    crime_count: int
    in_zone: bool = True


@dataclass(frozen=True)
class GridMap:
    rows: int
    cols: int
    cells: tuple[Cell, ...]
    cell_side_m: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(Cell(bool(c[0]), int(c[1]), bool(c[2])) for c in self.cells))
        if self.rows < 1 or self.cols < 1:
            raise InvariantViolation("rows > 0 and cols > 0", f"got {self.rows}x{self.cols}")
        if self.rows * self.cols != len(self.cells):
            raise InvariantViolation(
                "rows*cols == len(cells)", f"{self.rows}*{self.cols} != {len(self.cells)}"
            )
        if not self.cell_side_m > 0:
            raise InvariantViolation("cell_side_m > 0", f"got {self.cell_side_m}")
        for i, c in enumerate(self.cells):
            if c.crime_count < 0:
                raise InvariantViolation("crime_count >= 0", f"cell {i} has {c.crime_count}")

    def cell(self, r, c):
        return self.cells[r * self.cols + c]

    def crime_array(self):
        return np.array([c.crime_count for c in self.cells], dtype=np.int64).reshape(self.rows, self.cols)

    def road_array(self):
        return np.array([c.has_road for c in self.cells], dtype=bool).reshape(self.rows, self.cols)

    def zone_array(self):
        return np.array([c.in_zone for c in self.cells], dtype=bool).reshape(self.rows, self.cols)

    @classmethod
    def from_arrays(cls, road, crime, zone=None, cell_side_m=50.0):
        road = np.asarray(road, dtype=bool)
        crime = np.asarray(crime, dtype=np.int64)
        zone = np.ones_like(road) if zone is None else np.asarray(zone, dtype=bool)
        rows, cols = road.shape
        cells = tuple(
            Cell(bool(road[r, c]), int(crime[r, c]), bool(zone[r, c])) for r in range(rows) for c in range(cols)
        )
        return cls(rows, cols, cells, float(cell_side_m))


class Node(NamedTuple):
    id: int
    grid_pos: tuple[int, int]
    sigma: float
    in_zone: bool


class DisconnectedMonitoredSet(UserWarning):
    """The monitored nodes split into more than one connected component."""

    def __init__(self, components):
        super().__init__(f"monitored set has {len(components)} components: {components}")
        self.components = components


@dataclass(frozen=True, eq=False)
class PatrolGraph:
    """Undirected patrol graph. Immutable; BFS results are memoized per source."""

    nodes: tuple[Node, ...]
    adjacency: tuple[tuple[int, ...], ...]
    monitored: frozenset[int]
    rows: int
    cols: int
    _dist_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.nodes)
        object.__setattr__(self, "sigma", np.array([nd.sigma for nd in self.nodes], dtype=float))
        pos = np.array([nd.grid_pos for nd in self.nodes], dtype=np.int64).reshape(n, 2)
        object.__setattr__(self, "positions", pos)
        mask = np.zeros(n, dtype=bool)
        mask[list(self.monitored)] = True
        object.__setattr__(self, "monitored_mask", mask)
        object.__setattr__(self, "pos_to_id", {nd.grid_pos: nd.id for nd in self.nodes})
        for a in (self.sigma, pos, mask):
            a.setflags(write=False)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return sum(len(a) for a in self.adjacency) // 2

    def neighbors(self, v):
        self._check(v)
        return self.adjacency[v]

    def neighbor_in_direction(self, v, direction):
        r, c = self.nodes[v].grid_pos
        dr, dc = DIRECTIONS[direction]
        return self.pos_to_id.get((r + dr, c + dc))

    def _check(self, v):
        if not (isinstance(v, (int, np.integer)) and 0 <= v < len(self.nodes)):
            raise UnknownNode(f"node id {v!r} out of range [0, {len(self.nodes)})")

    def distances_from(self, source):
        """Hop distances from ``source`` to every node; -1 where unreachable."""
        self._check(source)
        cached = self._dist_cache.get(source)
        if cached is not None:
            return cached
        dist = np.full(len(self.nodes), -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for w in self.adjacency[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        dist.setflags(write=False)
        self._dist_cache[source] = dist
        return dist

    def components(self, subset=None):
        """Connected components (sorted id lists) of the subgraph induced by ``subset``."""
        members = set(range(len(self.nodes))) if subset is None else set(subset)
        seen = set()
        comps = []
        for s in sorted(members):
            if s in seen:
                continue
            comp = [s]
            seen.add(s)
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for w in self.adjacency[u]:
                    if w in members and w not in seen:
                        seen.add(w)
                        comp.append(w)
                        queue.append(w)
            comps.append(sorted(comp))
        return comps


def shortest_distance(graph: PatrolGraph, a: int, b: int):
    """Minimum hop count between ``a`` and ``b``, or ``UNREACHABLE`` (None)."""
    graph._check(b)
    d = int(graph.distances_from(a)[b])
    return UNREACHABLE if d < 0 else d


def skeletonize(grid: GridMap) -> PatrolGraph:
    """One node per road cell (row-major ids), edges between 4-neighbor road cells."""
    ids = {}
    nodes = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            cell = grid.cell(r, c)
            if cell.has_road:
                ids[(r, c)] = len(nodes)
                nodes.append(Node(len(nodes), (r, c), float(cell.crime_count), cell.in_zone))
    if not nodes:
        raise EmptyGraph("no cell has a road")
    adjacency = []
    for nd in nodes:
        r, c = nd.grid_pos
        nbrs = [ids[(r + dr, c + dc)] for dr, dc in DIRECTIONS if (r + dr, c + dc) in ids]
        adjacency.append(tuple(sorted(nbrs)))
    monitored = frozenset(nd.id for nd in nodes if nd.in_zone)
    graph = PatrolGraph(tuple(nodes), tuple(adjacency), monitored, grid.rows, grid.cols)
    if monitored:
        comps = graph.components(monitored)
        if len(comps) > 1:
            warnings.warn(DisconnectedMonitoredSet(comps), stacklevel=2)
    return graph


# ---------------------------------------------------------------------------
# synthetic maps


def _grid_components(road):
    rows, cols = road.shape
    label = np.full(road.shape, -1, dtype=np.int64)
    comps = []
    for r in range(rows):
        for c in range(cols):
            if not road[r, c] or label[r, c] >= 0:
                continue
            k = len(comps)
            label[r, c] = k
            comp = [(r, c)]
            queue = deque(comp)
            while queue:
                y, x = queue.popleft()
                for dy, dx in DIRECTIONS:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < rows and 0 <= nx < cols and road[ny, nx] and label[ny, nx] < 0:
                        label[ny, nx] = k
                        comp.append((ny, nx))
                        queue.append((ny, nx))
            comps.append(comp)
    return comps


def _connect_roads(road):
    """Carve L-shaped corridors until the road cells form one 4-connected component."""
    while True:
        comps = _grid_components(road)
        if len(comps) <= 1:
            return road
        main = max(comps, key=len)  # max() keeps the first (row-major) on ties
        other = next(c for c in comps if c is not main)
        a = np.array(other)
        b = np.array(main)
        d = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        (r0, c0), (r1, c1) = a[i], b[j]
        step_r = 1 if r1 >= r0 else -1
        for r in range(r0, r1 + step_r, step_r):
            road[r, c0] = True
        step_c = 1 if c1 >= c0 else -1
        for c in range(c0, c1 + step_c, step_c):
            road[r1, c] = True


def _place_peaks(spec, zone_cells, min_sep, rng):
    peaks = []
    for _ in range(spec.hotspots):
        for _attempt in range(200):
            r, c = zone_cells[rng.integers(len(zone_cells))]
            if all(max(abs(r - pr), abs(c - pc)) >= min_sep for pr, pc, _ in peaks):
                peaks.append((int(r), int(c), int(rng.integers(spec.peak_min, spec.peak_max + 1))))
                break
        else:
            return None
    return peaks


def generate_synthetic_map(spec: SyntheticSpec, seed: int) -> GridMap:
    """Random hotspot map; deterministic for a fixed ``(spec, seed)``.

    Crime decays linearly with Chebyshev distance from each peak and is zero
    beyond ``decay_radius``. Road cells always form one connected component.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    rows, cols, R, pad = spec.rows, spec.cols, spec.decay_radius, spec.padding

    zone = np.zeros((rows, cols), dtype=bool)
    zone[pad : rows - pad, pad : cols - pad] = True
    zone_cells = np.argwhere(zone)

    min_sep = 2 * R + 2
    for _round in range(100):
        peaks = _place_peaks(spec, zone_cells, min_sep, rng)
        if peaks is not None:
            break
    else:
        raise InvalidSpec(f"cannot place {spec.hotspots} hotspots {min_sep} cells apart on {rows}x{cols}")

    crime = np.zeros((rows, cols), dtype=np.int64)
    rr, cc = np.indices((rows, cols))
    for pr, pc, peak in peaks:
        d = np.maximum(np.abs(rr - pr), np.abs(cc - pc))
        cone = np.where(d <= R, (peak * (R + 1 - d)) // (R + 1), 0)
        crime = np.maximum(crime, cone)

    road = rng.random((rows, cols)) < spec.road_density
    for pr, pc, _ in peaks:
        road[pr, pc] = True
    if not road.any():
        r, c = zone_cells[rng.integers(len(zone_cells))]
        road[r, c] = True
    road = _connect_roads(road)
    return GridMap.from_arrays(road, crime, zone, spec.cell_side_m)


def local_maxima(grid: GridMap):
    """Cells whose crime count strictly exceeds all 8 neighbors."""
    crime = grid.crime_array()
    out = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            v = crime[r, c]
            nb = crime[max(r - 1, 0) : r + 2, max(c - 1, 0) : c + 2]
            if (nb < v).sum() == nb.size - 1:
                out.append((r, c))
    return out


# ---------------------------------------------------------------------------
# map files

_HEADER = ("rows", "cols", "cell_side_m", "cells")
_CELL = ("road", "crime", "zone")


def dumps_map(grid: GridMap) -> str:
    lines = [
        "{",
        f'  "rows": {grid.rows},',
        f'  "cols": {grid.cols},',
        f'  "cell_side_m": {json.dumps(float(grid.cell_side_m))},',
        '  "cells": [',
    ]
    n = len(grid.cells)
    for i, c in enumerate(grid.cells):
        sep = "," if i < n - 1 else ""
        lines.append(f'    {{"road": {int(c.has_road)}, "crime": {c.crime_count}, "zone": {int(c.in_zone)}}}{sep}')
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def save_map(grid: GridMap, path) -> None:
    Path(path).write_text(dumps_map(grid))


def _cell_lines(text):
    """Line number of each element of the top-level ``cells`` array (best effort)."""
    dec = json.JSONDecoder()
    start = text.find('"cells"')
    if start < 0:
        return []
    pos = text.find("[", start) + 1
    lines = []
    while pos < len(text):
        while pos < len(text) and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(text) or text[pos] == "]":
            break
        lines.append(text.count("\n", 0, pos) + 1)
        _, pos = dec.raw_decode(text, pos)
    return lines


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def loads_map(text: str) -> GridMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed map document: {e.msg}", line=e.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("map document must be an object", line=1)
    for key in doc:
        if key not in _HEADER:
            raise ParseError("unknown field", field=key)
    for key in _HEADER:
        if key not in doc:
            raise ParseError("missing field", field=key)
    rows, cols, side, cells = doc["rows"], doc["cols"], doc["cell_side_m"], doc["cells"]
    for key, val in (("rows", rows), ("cols", cols)):
        if not _is_int(val):
            raise ParseError("expected an integer", field=key)
    if not isinstance(side, (int, float)) or isinstance(side, bool):
        raise ParseError("expected a number", field="cell_side_m")
    if not isinstance(cells, list):
        raise ParseError("expected a list", field="cells")
    if rows * cols != len(cells):
        raise ParseError(f"rows*cols = {rows * cols} but {len(cells)} cells given", field="cells")

    line_of = None
    parsed = []
    for i, rec in enumerate(cells):
        problem = None
        if not isinstance(rec, dict):
            problem = ("expected an object", f"cells[{i}]")
        else:
            extra = [k for k in rec if k not in _CELL]
            missing = [k for k in _CELL if k not in rec]
            if extra:
                problem = ("unknown field", f"cells[{i}].{extra[0]}")
            elif missing:
                problem = ("missing field", f"cells[{i}].{missing[0]}")
            else:
                for k in ("road", "zone"):
                    if rec[k] not in (0, 1) or isinstance(rec[k], float):
                        problem = ("expected 0 or 1", f"cells[{i}].{k}")
                        break
                else:
                    if not _is_int(rec["crime"]):
                        problem = ("expected an integer", f"cells[{i}].crime")
        if problem:
            if line_of is None:
                line_of = _cell_lines(text)
            raise ParseError(problem[0], line=line_of[i] if i < len(line_of) else None, field=problem[1])
        parsed.append(Cell(bool(rec["road"]), rec["crime"], bool(rec["zone"])))
    return GridMap(rows, cols, tuple(parsed), float(side))


def load_map(path) -> GridMap:
    return loads_map(Path(path).read_text())
