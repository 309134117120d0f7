"""Metric-graph topology: edges, vertices, orientation signs, star constructors.

A metric graph is a multigraph whose edges carry a length parametrization:
bounded edges are intervals [0, length], unbounded edges are half-lines
parametrized with x = 0 at their unique finite vertex.  Vertex conditions are
imposed only at finite vertices; nothing is imposed "at infinity".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

UNBOUNDED = math.inf


class TopologyError(ValueError):
    """Raised for invalid graph topology or lookups."""


@dataclass(frozen=True)
class Edge:
    """One edge of a metric graph.

    ``head`` is the vertex at x = 0, ``tail`` the vertex at x = length
    (``None`` for unbounded edges, whose far endpoint is at infinity).
    """

    id: int
    length: float
    head: int
    tail: int | None

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise TopologyError(f"edge {self.id}: length must be positive")
        if self.is_unbounded and self.tail is not None:
            raise TopologyError(f"edge {self.id}: unbounded edge must have tail=None")
        if not self.is_unbounded and self.tail is None:
            raise TopologyError(f"edge {self.id}: bounded edge needs a finite tail vertex")

    @property
    def is_unbounded(self) -> bool:
        return math.isinf(self.length)

    def orientation_sign_at(self, vertex: int) -> int:
        """+1 if the trace convention at ``vertex`` is f(0), -1 if it is -f(length)."""
        if vertex == self.head:
            return +1
        if self.tail is not None and vertex == self.tail:
            return -1
        raise TopologyError(f"edge {self.id} is not incident at vertex {vertex}")


@dataclass(frozen=True)
class MetricGraph:
    """Connected metric graph with finite vertices 0..num_vertices-1."""

    edges: tuple[Edge, ...]
    num_vertices: int
    _incidence: tuple[tuple[tuple[int, int], ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.num_vertices < 1:
            raise TopologyError("graph needs at least one vertex")
        incidence: list[list[tuple[int, int]]] = [[] for _ in range(self.num_vertices)]
        for e in self.edges:
            for v in (e.head, e.tail):
                if v is None:
                    continue
                if not 0 <= v < self.num_vertices:
                    raise TopologyError(f"edge {e.id}: vertex {v} out of range")
                incidence[v].append((e.id, e.orientation_sign_at(v)))
        object.__setattr__(self, "_incidence", tuple(tuple(lst) for lst in incidence))
        self._check_connected()

    def _check_connected(self) -> None:
        if not self.edges:
            if self.num_vertices > 1:
                raise TopologyError("edgeless graph with several vertices is disconnected")
            return
        seen = {self.edges[0].head}
        frontier = [self.edges[0].head]
        while frontier:
            v = frontier.pop()
            for eid, _ in self._incidence[v]:
                e = self.edges[eid]
                for w in (e.head, e.tail):
                    if w is not None and w not in seen:
                        seen.add(w)
                        frontier.append(w)
        if len(seen) != self.num_vertices:
            raise TopologyError("graph is not connected")

    @property
    def compact_core(self) -> tuple[int, ...]:
        """Ids of the bounded edges (the compact core of the graph)."""
        return tuple(e.id for e in self.edges if not e.is_unbounded)

    def incident_edges(self, vertex: int) -> tuple[tuple[int, int], ...]:
        if not 0 <= vertex < self.num_vertices:
            raise TopologyError(f"unknown vertex {vertex}")
        return self._incidence[vertex]

    @property
    def is_star(self) -> bool:
        """True when the graph is a bunch of half-lines joined at one vertex."""
        return (
            self.num_vertices == 1
            and len(self.edges) >= 2
            and all(e.is_unbounded for e in self.edges)
        )

    def require_star(self) -> None:
        """Solvers that rely on scale invariance only accept star graphs."""
        if not self.is_star:
            raise TopologyError("this operation requires an infinite N-star graph")


@dataclass(frozen=True)
class StarSpec:
    """N half-lines incident at a single vertex, truncated at ``truncation_length``
    for numerics (the topology still records the edges as unbounded)."""

    n_edges: int
    truncation_length: float

    def __post_init__(self) -> None:
        if self.n_edges < 2:
            raise TopologyError("a star needs at least 2 half-lines")
        if self.truncation_length <= 0:
            raise TopologyError("truncation_length must be positive")


def make_star(spec: StarSpec) -> MetricGraph:
    """Infinite N-star graph: one finite vertex, N unbounded edges, empty core."""
    edges = tuple(Edge(id=i, length=UNBOUNDED, head=0, tail=None) for i in range(spec.n_edges))
    return MetricGraph(edges=edges, num_vertices=1)


def make_line(truncation_length: float) -> MetricGraph:
    """The real line as a 2-star split at the origin."""
    return make_star(StarSpec(n_edges=2, truncation_length=truncation_length))


def incidence_signs(graph: MetricGraph, vertex: int) -> list[tuple[int, int]]:
    """(edge_id, orientation sign) for every edge incident at ``vertex``."""
    return list(graph.incident_edges(vertex))
