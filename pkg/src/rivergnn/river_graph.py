"""Gauge networks as weighted anti-transitive DAGs, plus the preprocessing
algorithms that act on them (ancestor search, rewire-removal, filtering)."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .exceptions import DataError, DomainError, IntegrityError

GaugeId = int
Edge = tuple[GaugeId, GaugeId]

EDGE_HEADER = ["src_id", "dst_id", "stream_length_m", "elevation_diff_m", "avg_slope"]


@dataclass(frozen=True)
class EdgeAttrs:
    stream_length: float
    elevation_difference: float
    average_slope: float

    @classmethod
    def from_length_and_drop(cls, stream_length: float, elevation_difference: float) -> "EdgeAttrs":
        return cls(stream_length, elevation_difference, elevation_difference / stream_length)

    def combine(self, other: "EdgeAttrs") -> "EdgeAttrs":
        """Attributes of the edge replacing the path ``self`` then ``other``."""
        return EdgeAttrs.from_length_and_drop(
            self.stream_length + other.stream_length,
            self.elevation_difference + other.elevation_difference,
        )

    def slope_consistent(self, rel_tol: float = 1e-9) -> bool:
        return math.isclose(
            self.average_slope, self.elevation_difference / self.stream_length, rel_tol=rel_tol, abs_tol=0.0
        ) or (self.average_slope == 0.0 and self.elevation_difference == 0.0)


@dataclass(frozen=True)
class Violation:
    kind: str  # "cycle", "anti_transitivity", "self_loop", "dangling"
    nodes: tuple[GaugeId, ...]

    def __str__(self) -> str:
        if self.kind == "anti_transitivity":
            return f"skip connection {self.nodes[0]}->{self.nodes[1]} shortcuts a longer downstream path"
        if self.kind == "self_loop":
            return f"self-loop on gauge {self.nodes[0]}"
        if self.kind == "cycle":
            return "cycle among gauges " + ", ".join(map(str, self.nodes))
        return f"edge {self.nodes[0]}->{self.nodes[1]} references an unknown gauge"


@dataclass(frozen=True)
class RiverGraph:
    """Gauge network. Edges point downstream: ``(src, dst)`` means src flows into dst."""

    nodes: frozenset[GaugeId]
    edges: Mapping[Edge, EdgeAttrs] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(int(v) for v in self.nodes))
        object.__setattr__(self, "edges", dict(self.edges))

    def __hash__(self):
        return hash((self.nodes, tuple(sorted(self.edges))))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def order(self) -> tuple[GaugeId, ...]:
        """Canonical node ordering (ascending id) used for every matrix."""
        return tuple(sorted(self.nodes))

    @cached_property
    def index(self) -> dict[GaugeId, int]:
        return {v: i for i, v in enumerate(self.order)}

    @cached_property
    def predecessors(self) -> dict[GaugeId, tuple[GaugeId, ...]]:
        pred: dict[GaugeId, list[GaugeId]] = {v: [] for v in self.nodes}
        for u, v in sorted(self.edges):
            pred.setdefault(v, []).append(u)
        return {v: tuple(p) for v, p in pred.items()}

    @cached_property
    def successors(self) -> dict[GaugeId, tuple[GaugeId, ...]]:
        succ: dict[GaugeId, list[GaugeId]] = {v: [] for v in self.nodes}
        for u, v in sorted(self.edges):
            succ.setdefault(u, []).append(v)
        return {v: tuple(s) for v, s in succ.items()}

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def sinks(self) -> list[GaugeId]:
        return [v for v in self.order if not self.successors[v]]

    def subgraph(self, keep: Iterable[GaugeId]) -> "RiverGraph":
        """Induced subgraph on ``keep`` (no rewiring)."""
        keep = frozenset(keep)
        return RiverGraph(keep, {e: a for e, a in self.edges.items() if e[0] in keep and e[1] in keep})

    def relabel(self, mapping: Mapping[GaugeId, GaugeId]) -> "RiverGraph":
        return RiverGraph(
            {mapping[v] for v in self.nodes},
            {(mapping[u], mapping[v]): a for (u, v), a in self.edges.items()},
        )

    def content_hash(self) -> str:
        """Stable sha256 of the canonical edge/node listing."""
        buf = io.StringIO()
        _write_edges(self, buf)
        buf.write("nodes:" + ",".join(map(str, self.order)))
        return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def _require_node(graph: RiverGraph, v: GaugeId) -> None:
    if v not in graph.nodes:
        raise DomainError(f"unknown gauge id {v}")


def inverse_dfs(graph: RiverGraph, start: GaugeId) -> set[GaugeId]:
    """``start`` together with all of its direct and indirect predecessors."""
    _require_node(graph, start)
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for u in graph.predecessors[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return seen


def rewire_remove(graph: RiverGraph, victim: GaugeId) -> RiverGraph:
    """Delete ``victim`` and connect each predecessor to each successor.

    Stream lengths and elevation differences of the two replaced edges add up;
    the average slope of the new edge is recomputed from the sums.
    """
    _require_node(graph, victim)
    preds = graph.predecessors[victim]
    succs = graph.successors[victim]
    edges = {e: a for e, a in graph.edges.items() if victim not in e}
    for p in preds:
        for s in succs:
            if (p, s) in edges:
                raise IntegrityError(
                    f"removing {victim} would duplicate edge {p}->{s}; input graph is not anti-transitive"
                )
            edges[(p, s)] = graph.edges[(p, victim)].combine(graph.edges[(victim, s)])
    return RiverGraph(graph.nodes - {victim}, edges)


def filter_gauges(graph: RiverGraph, keep: Callable[[GaugeId], bool]) -> RiverGraph:
    """Rewire-remove every gauge failing ``keep``, in ascending id order."""
    for v in [v for v in graph.order if not keep(v)]:
        graph = rewire_remove(graph, v)
    return graph


def topological_order(graph: RiverGraph) -> list[GaugeId]:
    """Kahn's algorithm with a sorted frontier; raises on cycles."""
    indeg = {v: len(graph.predecessors[v]) for v in graph.order}
    ready = deque(v for v in graph.order if indeg[v] == 0)
    out = []
    while ready:
        v = ready.popleft()
        out.append(v)
        for s in graph.successors[v]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if len(out) != graph.n:
        raise DomainError("graph contains a cycle")
    return out


def longest_path_length(graph: RiverGraph) -> int:
    """Maximum number of edges on any directed path."""
    depth: dict[GaugeId, int] = {}
    for v in topological_order(graph):
        depth[v] = max((depth[u] + 1 for u in graph.predecessors[v]), default=0)
    return max(depth.values(), default=0)


def _cycle_nodes(graph: RiverGraph) -> list[GaugeId]:
    indeg = {v: len(graph.predecessors[v]) for v in graph.order}
    ready = [v for v in graph.order if indeg[v] == 0]
    done = set()
    while ready:
        v = ready.pop()
        done.add(v)
        for s in graph.successors[v]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    return [v for v in graph.order if v not in done]


def validate(graph: RiverGraph) -> list[Violation]:
    """Structural problems of ``graph``; empty for a proper anti-transitive DAG."""
    violations = []
    for u, v in graph.sorted_edges():
        if u not in graph.nodes or v not in graph.nodes:
            violations.append(Violation("dangling", (u, v)))
        elif u == v:
            violations.append(Violation("self_loop", (u,)))
    if violations:
        return violations

    cyclic = _cycle_nodes(graph)
    if cyclic:
        violations.append(Violation("cycle", tuple(cyclic)))

    for u, v in graph.sorted_edges():
        # is v reachable from u without using the edge (u, v) itself?
        seen = set()
        stack = [w for w in graph.successors[u] if w != v]
        while stack:
            w = stack.pop()
            if w == v:
                violations.append(Violation("anti_transitivity", (u, v)))
                break
            if w in seen or w == u:
                continue
            seen.add(w)
            stack.extend(graph.successors[w])
    return violations


def slope_inconsistencies(graph: RiverGraph, rel_tol: float = 1e-9) -> list[Edge]:
    """Edges whose stored slope disagrees with elevation difference / length."""
    return [e for e in graph.sorted_edges() if not graph.edges[e].slope_consistent(rel_tol)]


# --- CSV interchange -------------------------------------------------------


def _write_edges(graph: RiverGraph, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EDGE_HEADER)
    for u, v in graph.sorted_edges():
        a = graph.edges[(u, v)]
        w.writerow([u, v, repr(a.stream_length), repr(a.elevation_difference), repr(a.average_slope)])


def write_graph(graph: RiverGraph, directory: str | Path) -> None:
    directory = Path(directory)
    with open(directory / "edges.csv", "w", encoding="utf-8", newline="") as fh:
        _write_edges(graph, fh)
    with open(directory / "nodes.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("gauge_id\n")
        for v in graph.order:
            fh.write(f"{v}\n")


def read_graph(directory: str | Path) -> RiverGraph:
    directory = Path(directory)
    try:
        with open(directory / "nodes.csv", encoding="utf-8", newline="") as fh:
            nodes = {int(row["gauge_id"]) for row in csv.DictReader(fh)}
        edges: dict[Edge, EdgeAttrs] = {}
        with open(directory / "edges.csv", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or list(reader.fieldnames[:5]) != EDGE_HEADER:
                raise DataError(f"edges.csv header must be {','.join(EDGE_HEADER)}")
            for row in reader:
                key = (int(row["src_id"]), int(row["dst_id"]))
                if key in edges:
                    raise IntegrityError(f"parallel edge {key[0]}->{key[1]} in edges.csv")
                edges[key] = EdgeAttrs(
                    float(row["stream_length_m"]), float(row["elevation_diff_m"]), float(row["avg_slope"])
                )
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read graph from {directory}: {exc}") from exc
    return RiverGraph(nodes, edges)
