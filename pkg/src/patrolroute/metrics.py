"""Coverage index over the hottest monitored nodes, and route entropy."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from patrolroute.errors import EmptyMonitoredSet, MixedGraphs, ParseError

DEFAULT_PSI = (3, 5, 10, 20)


@dataclass(frozen=True)
class HotspotRanking:
    nodes: tuple[int, ...]

    @classmethod
    def from_graph(cls, graph):
        """Monitored nodes by descending sigma, ties by ascending id."""
        return cls(tuple(sorted(graph.monitored, key=lambda v: (-graph.sigma[v], v))))


def top_count(psi, size) -> int:
    if not 0 < psi <= 100:
        raise ValueError(f"psi must lie in (0, 100], got {psi}")
    return math.ceil(Fraction(psi) * size / 100)


def top_psi_set(ranking: HotspotRanking, psi) -> frozenset[int]:
    if not ranking.nodes:
        raise EmptyMonitoredSet("no monitored nodes to rank")
    return frozenset(ranking.nodes[: top_count(psi, len(ranking.nodes))])


def coverage_index(graph, episode, psi, ranking=None) -> float:
    """|Z ∩ visited| / |Z| for the top-psi% monitored nodes Z."""
    ranking = ranking or HotspotRanking.from_graph(graph)
    z = top_psi_set(ranking, psi)
    visited = episode.visited() if hasattr(episode, "visited") else set(episode)
    return len(z & visited) / len(z)


def route_entropy(episodes) -> float:
    """Mean over steps of the entropy (nats) of the joint agent placement.

    At each step the outcome of an episode is the tuple of node ids held by
    agent slots 0..N-1; entropy is taken over the empirical distribution of
    those tuples across the batch.
    """
    episodes = list(episodes)
    if not episodes:
        return 0.0
    steps = len(episodes[0].routes[0])
    total = 0.0
    for t in range(steps):
        counts = Counter(tuple(r[t] for r in ep.routes) for ep in episodes)
        n = len(episodes)
        h = -math.fsum(c / n * math.log(c / n) for c in counts.values())
        total += max(h, 0.0)
    return total / steps


@dataclass
class CoverageReport:
    psi_values: tuple = DEFAULT_PSI
    coverage: dict = field(default_factory=dict)
    entropy: float = 0.0
    num_runs: int = 0
    pooled: bool = False
    config_hash: str = ""

    def to_dict(self):
        return {
            "format": "patrolroute-report",
            "version": 1,
            "psi": [[p, self.coverage[p]] for p in self.psi_values],
            "entropy": self.entropy,
            "num_runs": self.num_runs,
            "pooled": self.pooled,
            "config_hash": self.config_hash,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, line=e.lineno) from None
        if d.get("format") != "patrolroute-report":
            raise ParseError("not a coverage report", field="format")
        psi = tuple(p for p, _ in d["psi"])
        return cls(psi, {p: c for p, c in d["psi"]}, d["entropy"], d["num_runs"], d["pooled"], d["config_hash"])

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


def _check_episodes(graph, episodes):
    for k, ep in enumerate(episodes):
        if ep.num_nodes is not None and ep.num_nodes != graph.num_nodes:
            raise MixedGraphs(f"episode {k} recorded {ep.num_nodes} nodes, graph has {graph.num_nodes}")
        for route in ep.routes:
            if any(not 0 <= v < graph.num_nodes for v in route):
                raise MixedGraphs(f"episode {k} references nodes outside [0, {graph.num_nodes})")


def batch_evaluate(graph, episodes, psi_values=DEFAULT_PSI, pooled=False, config_hash="") -> CoverageReport:
    """Average per-run coverage (or coverage of the pooled union) plus route entropy."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("no episodes to evaluate")
    _check_episodes(graph, episodes)
    ranking = HotspotRanking.from_graph(graph)
    psi_values = tuple(psi_values)
    coverage = {}
    if pooled:
        union = set().union(*(ep.visited() for ep in episodes))
        for p in psi_values:
            coverage[p] = coverage_index(graph, union, p, ranking)
    else:
        for p in psi_values:
            coverage[p] = math.fsum(coverage_index(graph, ep, p, ranking) for ep in episodes) / len(episodes)
    return CoverageReport(psi_values, coverage, route_entropy(episodes), len(episodes), pooled, config_hash)


# ---------------------------------------------------------------------------
# flat comparison tables

TABLE_PREFIX = ("policy", "line_of_sight", "start", "patrols")


def table_header(psi_values=DEFAULT_PSI):
    return list(TABLE_PREFIX) + [f"W_{p:g}" for p in psi_values] + ["entropy"]


def table_row(policy, line_of_sight, start, patrols, report: CoverageReport):
    cells = [str(policy), str(line_of_sight), str(start), str(patrols)]
    cells += [f"{report.coverage[p]:.3f}" for p in report.psi_values]
    cells.append(f"{report.entropy:.2f}")
    return cells


def format_table(rows, psi_values=DEFAULT_PSI) -> str:
    lines = ["\t".join(table_header(psi_values))]
    lines += ["\t".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def parse_table(text):
    """Inverse of ``format_table``: list of dicts with typed values."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty table", line=1)
    header = lines[0].split("\t")
    if header[: len(TABLE_PREFIX)] != list(TABLE_PREFIX) or header[-1] != "entropy":
        raise ParseError("unexpected table header", line=1)
    out = []
    for n, ln in enumerate(lines[1:], start=2):
        cells = ln.split("\t")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(cells)}", line=n)
        row = dict(zip(header, cells))
        try:
            row["patrols"] = int(row["patrols"])
            for h in header[len(TABLE_PREFIX) :]:
                row[h] = float(row[h])
        except ValueError as e:
            raise ParseError(str(e), line=n) from None
        out.append(row)
    return out
