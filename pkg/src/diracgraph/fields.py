"""Staggered discretization of scalar and spinor fields on a metric graph.

Layout per edge of length L = M*h:
  * first components ("phi") live on integer nodes x_j = j*h, j = 0..M;
  * second components ("chi") live on half nodes x_{j+1/2} = (j+1/2)*h.

The value of phi at a finite vertex is stored once and shared by all incident
edges, which enforces continuity of the first component structurally.  Far
ends of truncated half-lines keep their own phi slot (hard-wall closure is an
operator concern).

Quadrature: trapezoid on integer nodes, midpoint on half nodes, both O(h^2).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .graphs import MetricGraph, TopologyError


class GridError(ValueError):
    """Raised for invalid grids or mismatched field/grid combinations."""


@dataclass(frozen=True)
class GridSpec:
    """Per-edge spacing and node counts for the staggered grid.

    ``counts[e] * spacing[e]`` is the (truncated) length of edge ``e``.
    """

    graph: MetricGraph
    spacing: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        ne = len(self.graph.edges)
        if len(self.spacing) != ne or len(self.counts) != ne:
            raise GridError("spacing/counts must have one entry per edge")
        for e in self.graph.edges:
            h, m = self.spacing[e.id], self.counts[e.id]
            if h <= 0:
                raise GridError(f"edge {e.id}: spacing must be positive")
            if m < 4:
                raise GridError(f"edge {e.id}: need at least 4 cells")
            if not e.is_unbounded and abs(m * h - e.length) > 1e-9 * e.length:
                raise GridError(f"edge {e.id}: counts*spacing does not match edge length")

    @classmethod
    def uniform(cls, graph: MetricGraph, h: float, truncation: float) -> "GridSpec":
        """Same spacing on every edge; half-lines truncated at ``truncation``."""
        if h <= 0 or truncation <= 0:
            raise GridError("spacing and truncation must be positive")
        spacing, counts = [], []
        for e in graph.edges:
            length = truncation if e.is_unbounded else e.length
            m = max(4, int(round(length / h)))
            counts.append(m)
            spacing.append(length / m)
        return cls(graph=graph, spacing=tuple(spacing), counts=tuple(counts))

    def truncated_length(self, edge: int) -> float:
        return self.spacing[edge] * self.counts[edge]


class Grid:
    """Index maps and quadrature weights over a :class:`GridSpec`.

    Global vector layouts:
      * phi layout: [vertex slots 0..V-1] then per-edge slots for nodes
        1..M-1 plus the far node M when the edge has no finite tail;
      * chi layout: per-edge blocks of M half nodes;
      * spinor layout: phi block followed by chi block.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.graph = spec.graph
        g = self.graph
        self.n_vertices = g.num_vertices
        self._phi_base: list[int] = []
        self._phi_has_far: list[bool] = []
        off = g.num_vertices
        for e in g.edges:
            self._phi_base.append(off)
            has_far = e.tail is None
            self._phi_has_far.append(has_far)
            off += spec.counts[e.id] - 1 + (1 if has_far else 0)
        self.n_phi = off
        self._chi_base: list[int] = []
        off = 0
        for e in g.edges:
            self._chi_base.append(off)
            off += spec.counts[e.id]
        self.n_chi = off
        self.n_spinor = self.n_phi + self.n_chi
        self.phi_weights = self._build_phi_weights()
        self.chi_weights = self._build_chi_weights()
        self.spinor_weights = np.concatenate([self.phi_weights, self.chi_weights])

    # -- indexing -----------------------------------------------------------

    def h(self, edge: int) -> float:
        return self.spec.spacing[edge]

    def m(self, edge: int) -> int:
        return self.spec.counts[edge]

    def phi_slot(self, edge: int, j: int) -> int:
        """Global phi slot of integer node j on ``edge`` (0 <= j <= M)."""
        e = self.graph.edges[edge]
        mcount = self.m(edge)
        if j == 0:
            return e.head
        if j == mcount and e.tail is not None:
            return e.tail
        if not 1 <= j <= (mcount if self._phi_has_far[edge] else mcount - 1):
            raise GridError(f"edge {edge}: integer node {j} out of range")
        return self._phi_base[edge] + j - 1

    def phi_slots(self, edge: int) -> np.ndarray:
        """Global phi slots of nodes 0..M on ``edge`` as an index array."""
        mcount = self.m(edge)
        return np.array([self.phi_slot(edge, j) for j in range(mcount + 1)], dtype=np.intp)

    def far_phi_slots(self) -> np.ndarray:
        """Slots of far-wall nodes of truncated half-lines."""
        out = []
        for e in self.graph.edges:
            if self._phi_has_far[e.id]:
                out.append(self.phi_slot(e.id, self.m(e.id)))
        return np.array(out, dtype=np.intp)

    def chi_slot(self, edge: int, j: int) -> int:
        """Global chi slot of half node j+1/2 on ``edge`` (0 <= j < M)."""
        if not 0 <= j < self.m(edge):
            raise GridError(f"edge {edge}: half node {j}+1/2 out of range")
        return self._chi_base[edge] + j

    def chi_slice(self, edge: int) -> slice:
        return slice(self._chi_base[edge], self._chi_base[edge] + self.m(edge))

    def x_int(self, edge: int) -> np.ndarray:
        return self.h(edge) * np.arange(self.m(edge) + 1)

    def x_half(self, edge: int) -> np.ndarray:
        return self.h(edge) * (np.arange(self.m(edge)) + 0.5)

    # -- quadrature weights --------------------------------------------------

    def _build_phi_weights(self) -> np.ndarray:
        w = np.zeros(self.n_phi)
        for e in self.graph.edges:
            h = self.h(e.id)
            slots = self.phi_slots(e.id)
            w[slots] += h
            w[slots[0]] -= h / 2
            w[slots[-1]] -= h / 2
        return w

    def _build_chi_weights(self) -> np.ndarray:
        w = np.zeros(self.n_chi)
        for e in self.graph.edges:
            w[self.chi_slice(e.id)] = self.h(e.id)
        return w


def _as_finite(values: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if not np.all(np.isfinite(arr.view(np.float64) if np.iscomplexobj(arr) else arr)):
        raise GridError(f"{what} contains non-finite entries")
    return arr


@dataclass
class ScalarField:
    """Field on one node family; vertex values shared through the layout.

    ``family`` is "integer" (phi layout) or "half" (chi layout).
    """

    grid: Grid
    data: np.ndarray
    family: str = "integer"

    def __post_init__(self) -> None:
        n = self.grid.n_phi if self.family == "integer" else self.grid.n_chi
        if self.family not in ("integer", "half"):
            raise GridError(f"unknown node family {self.family!r}")
        if self.data.shape != (n,):
            raise GridError("scalar field data does not match grid layout")
        _as_finite(self.data, "scalar field")

    @classmethod
    def zeros(cls, grid: Grid, family: str = "integer", dtype=float) -> "ScalarField":
        n = grid.n_phi if family == "integer" else grid.n_chi
        return cls(grid=grid, data=np.zeros(n, dtype=dtype), family=family)

    def edge_values(self, edge: int) -> np.ndarray:
        if self.family == "integer":
            return self.data[self.grid.phi_slots(edge)]
        return self.data[self.grid.chi_slice(edge)]

    @property
    def weights(self) -> np.ndarray:
        return self.grid.phi_weights if self.family == "integer" else self.grid.chi_weights

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.data.copy(), self.family)


@dataclass
class SpinorField:
    """Two-component complex field: phi on integer nodes, chi on half nodes.

    Value semantics: read-only use is safe to share across threads; mutation
    needs exclusive access (grids and graphs themselves are immutable).
    """

    grid: Grid
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.shape != (self.grid.n_spinor,):
            raise GridError("spinor data does not match grid layout")
        if not np.iscomplexobj(self.data):
            self.data = self.data.astype(np.complex128)
        _as_finite(self.data, "spinor field")

    @classmethod
    def zeros(cls, grid: Grid) -> "SpinorField":
        return cls(grid=grid, data=np.zeros(grid.n_spinor, dtype=np.complex128))

    @classmethod
    def from_components(cls, grid: Grid, phi: np.ndarray, chi: np.ndarray) -> "SpinorField":
        data = np.concatenate([np.asarray(phi, dtype=np.complex128),
                               np.asarray(chi, dtype=np.complex128)])
        return cls(grid=grid, data=data)

    @property
    def phi(self) -> np.ndarray:
        return self.data[: self.grid.n_phi]

    @property
    def chi(self) -> np.ndarray:
        return self.data[self.grid.n_phi:]

    def phi_edge(self, edge: int) -> np.ndarray:
        return self.phi[self.grid.phi_slots(edge)]

    def chi_edge(self, edge: int) -> np.ndarray:
        return self.chi[self.grid.chi_slice(edge)]

    def set_phi_edge(self, edge: int, values: np.ndarray) -> None:
        self.phi[self.grid.phi_slots(edge)] = values

    def set_chi_edge(self, edge: int, values: np.ndarray) -> None:
        self.chi[self.grid.chi_slice(edge)] = values

    def copy(self) -> "SpinorField":
        return SpinorField(self.grid, self.data.copy())


Field = ScalarField | SpinorField


def l2_norm(f: Field) -> float:
    """Trapezoid/midpoint approximation of the L2 norm."""
    if isinstance(f, SpinorField):
        w = f.grid.spinor_weights
        return math.sqrt(float(np.sum(w * np.abs(f.data) ** 2)))
    return math.sqrt(float(np.sum(f.weights * np.abs(f.data) ** 2)))


def l2_inner(f: SpinorField, g: SpinorField) -> complex:
    if f.grid is not g.grid and f.grid.n_spinor != g.grid.n_spinor:
        raise GridError("fields live on different grids")
    w = f.grid.spinor_weights
    return complex(np.sum(w * np.conj(f.data) * g.data))


def chi_to_integer_nodes(f: SpinorField, edge: int) -> np.ndarray:
    """Chi values interpolated to integer nodes by averaging adjacent half nodes.

    Endpoints use the single adjacent half node.
    """
    chi = f.chi_edge(edge)
    out = np.empty(len(chi) + 1, dtype=chi.dtype)
    out[0] = chi[0]
    out[-1] = chi[-1]
    out[1:-1] = 0.5 * (chi[:-1] + chi[1:])
    return out


def lp_power_integral(f: SpinorField, p: float) -> float:
    """Quadrature of the integral of |f|^p over the graph, p > 2.

    |f| is the pointwise C^2 modulus with chi interpolated to integer nodes.
    """
    if p <= 2:
        raise ValueError("lp_power_integral requires p > 2")
    total = 0.0
    for e in f.grid.graph.edges:
        h = f.grid.h(e.id)
        phi = f.phi_edge(e.id)
        chi_bar = chi_to_integer_nodes(f, e.id)
        dens = (np.abs(phi) ** 2 + np.abs(chi_bar) ** 2) ** (p / 2)
        total += h * (np.sum(dens) - 0.5 * (dens[0] + dens[-1]))
    return float(total)


def chi_vertex_trace(f: SpinorField, edge: int, sign: int) -> complex:
    """Second-order extrapolated chi trace at the vertex end given by ``sign``.

    sign=+1 traces at x=0, sign=-1 returns -chi(length) per the orientation
    convention.
    """
    chi = f.chi_edge(edge)
    if sign == +1:
        return complex(0.5 * (3.0 * chi[0] - chi[1]))
    return complex(-0.5 * (3.0 * chi[-1] - chi[-2]))


@dataclass(frozen=True)
class VertexResidual:
    continuity_max: float
    kirchhoff_sum: complex


def vertex_residuals(f: SpinorField, graph: MetricGraph | None = None) -> dict[int, VertexResidual]:
    """Continuity and signed chi-sum residuals at every finite vertex.

    Continuity of phi is zero by construction (shared vertex storage); the
    Kirchhoff-type sum uses second-order extrapolated chi traces.
    """
    g = graph if graph is not None else f.grid.graph
    if g is not f.grid.graph and len(g.edges) != len(f.grid.graph.edges):
        raise TopologyError("field does not live on this graph")
    out: dict[int, VertexResidual] = {}
    for v in range(g.num_vertices):
        total = 0.0 + 0.0j
        for eid, sign in g.incident_edges(v):
            total += chi_vertex_trace(f, eid, sign)
        out[v] = VertexResidual(continuity_max=0.0, kirchhoff_sum=total)
    return out


# -- CSV snapshots ------------------------------------------------------------

SNAPSHOT_COLUMNS = ["edge_id", "node_kind", "x", "re_phi", "im_phi", "re_chi", "im_chi"]


def write_snapshot_csv(f: SpinorField | ScalarField, path) -> None:
    """Field snapshot: one row per node, phi rows and chi rows interleaved by edge."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SNAPSHOT_COLUMNS)
        grid = f.grid
        for e in grid.graph.edges:
            if isinstance(f, SpinorField) or f.family == "integer":
                phi = f.phi_edge(e.id) if isinstance(f, SpinorField) else f.edge_values(e.id)
                for x, val in zip(grid.x_int(e.id), phi):
                    writer.writerow([e.id, "int", repr(float(x)),
                                     repr(float(np.real(val))), repr(float(np.imag(val))), "", ""])
            if isinstance(f, SpinorField) or f.family == "half":
                chi = f.chi_edge(e.id) if isinstance(f, SpinorField) else f.edge_values(e.id)
                for x, val in zip(grid.x_half(e.id), chi):
                    writer.writerow([e.id, "half", repr(float(x)), "", "",
                                     repr(float(np.real(val))), repr(float(np.imag(val)))])


def iter_snapshot_rows(path) -> Iterable[dict]:
    with open(path, newline="") as handle:
        yield from csv.DictReader(handle)
