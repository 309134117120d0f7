"""Sparse Hermitian operators on the staggered grid.

Assembled operators:
  * the Dirac operator with Kirchhoff-type vertex conditions, acting as
    -i*c*sigma1*d/dx + m*c^2*sigma3 on each edge, with continuity of the first
    component enforced strongly (shared vertex unknown) and the signed sum of
    second-component traces enforced weakly through the vertex row;
  * the Laplacian -u''/(2*mass_scale) with Kirchhoff vertex conditions
    (continuity + zero flux sum) on the integer-node family;
  * the Laplacian with homogeneous delta' vertex conditions (derivative
    continuity + zero signed value sum) on the half-node family;
  * their block direct sum pairing Kirchhoff on first components with delta'
    on second components.

Matrices are stored in sqrt-weight coordinates y = sqrt(w) * x, where w are
the quadrature weights; there each operator is exactly Hermitian entrywise
and the discrete L2 norm is the plain Euclidean norm.  Truncated far ends of
half-lines close with a zero ghost chi (hard wall); for the scalar
Laplacians the matching closures are Neumann (integer family) and Dirichlet
(half family), selectable per operator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import Grid, ScalarField, SpinorField
from .graphs import MetricGraph


class AssemblyError(ValueError):
    """Raised when an operator cannot be assembled on the given grid."""


class SolverError(RuntimeError):
    """Raised when a linear solve fails its residual contract."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class PhysParams:
    """Mass m, relativistic parameter c, nonlinearity power p."""

    m: float
    c: float = 1.0
    p: float = 4.0

    def __post_init__(self) -> None:
        if self.m <= 0:
            raise ValueError("mass m must be positive")
        if self.c <= 0:
            raise ValueError("relativistic parameter c must be positive")
        if self.p <= 2:
            raise ValueError("nonlinearity power p must exceed 2")

    @property
    def rest_energy(self) -> float:
        return self.m * self.c**2


Component = Literal["spinor", "integer", "half"]


@dataclass
class HermitianOperator:
    """Sparse Hermitian matrix over one of the grid layouts.

    ``matrix`` lives in sqrt-weight coordinates; ``weights`` are the
    quadrature weights of the layout, so a field vector x corresponds to the
    coordinate vector sqrt(w)*x.
    """

    matrix: sp.csr_matrix
    weights: np.ndarray
    grid: Grid
    kind: str
    component: Component = "spinor"

    def __post_init__(self) -> None:
        self._sqrt_w = np.sqrt(self.weights)
        self._lu_cache: dict[complex, spla.SuperLU] = {}

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.getH()
        return 0.0 if d.nnz == 0 else float(np.max(np.abs(d.data)))

    # -- vector/field conversions -------------------------------------------

    def field_to_vec(self, f: SpinorField | ScalarField) -> np.ndarray:
        return self._sqrt_w * f.data

    def vec_to_field(self, vec: np.ndarray) -> SpinorField | ScalarField:
        data = vec / self._sqrt_w
        if self.component == "spinor":
            return SpinorField(self.grid, data)
        return ScalarField(self.grid, data, family=self.component)

    def apply_vec(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec

    def apply_field(self, f: SpinorField | ScalarField):
        return self.vec_to_field(self.matrix @ self.field_to_vec(f))

    def quadratic_form(self, f: SpinorField | ScalarField) -> complex:
        vec = self.field_to_vec(f)
        return complex(np.vdot(vec, self.matrix @ vec))

    # -- solves and spectra ---------------------------------------------------

    def _factorize(self, z: complex) -> spla.SuperLU:
        key = complex(z)
        lu = self._lu_cache.get(key)
        if lu is None:
            shifted = (self.matrix - z * sp.eye(self.dim, format="csr")).tocsc()
            lu = spla.splu(shifted)
            self._lu_cache[key] = lu
        return lu

    def shifted_solve(self, z: complex, b: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
        """Solve (A - z) x = b in sqrt-weight coordinates to relative tol."""
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros_like(b, dtype=np.complex128)
        try:
            lu = self._factorize(z)
            x = lu.solve(b.astype(np.complex128))
        except Exception as exc:  # pragma: no cover - factorization breakdown
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        res = float(np.linalg.norm(self.matrix @ x - z * x - b))
        if res > rtol * bnorm:
            # one step of iterative refinement before giving up
            x = x + lu.solve(b - (self.matrix @ x - z * x))
            res = float(np.linalg.norm(self.matrix @ x - z * x - b))
            if res > rtol * bnorm:
                raise SolverError(
                    f"shifted solve residual {res:.3e} exceeds {rtol:.1e}*|b|",
                    residual=res,
                )
        return x

    def shifted_solve_field(self, z: complex, b, rtol: float = 1e-10):
        return self.vec_to_field(self.shifted_solve(z, self.field_to_vec(b), rtol))

    def extremal_eigs(self, count: int, which: str = "smallest-magnitude") -> np.ndarray:
        """Eigenvalues of the Hermitian matrix nearest zero, ascending by |.|."""
        if which not in ("smallest-magnitude", "edges-of-gap"):
            raise ValueError(f"unknown eigenvalue selector {which!r}")
        n = self.dim
        if n <= 600:
            vals = np.linalg.eigvalsh(self.matrix.toarray())
            order = np.argsort(np.abs(vals))
            return np.sort(vals[order[:count]])
        try:
            vals = spla.eigsh(
                self.matrix,
                k=count,
                sigma=0.0,
                which="LM",
                return_eigenvectors=False,
                tol=1e-10,
                v0=np.ones(n),
            )
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"eigensolver did not converge: {exc}") from exc
        return np.sort(np.real(vals))

    def export_coo(self, path) -> None:
        """Coordinate-list text dump: one 'row col re im' line per entry."""
        coo = self.matrix.tocoo()
        with open(path, "w") as handle:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                handle.write(f"{int(r)} {int(c)} {float(v.real)!r} {float(v.imag)!r}\n")


class _SymmetricBuilder:
    """COO accumulator that adds off-diagonal entries in exact conjugate pairs."""

    def __init__(self) -> None:
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[complex] = []

    def diag(self, i: int, v: float) -> None:
        self.rows.append(i)
        self.cols.append(i)
        self.vals.append(v)

    def pair(self, i: int, j: int, v: complex) -> None:
        self.rows.append(i)
        self.cols.append(j)
        self.vals.append(v)
        self.rows.append(j)
        self.cols.append(i)
        self.vals.append(np.conj(v))

    def build(self, n: int, weights: np.ndarray) -> sp.csr_matrix:
        dinv = 1.0 / np.sqrt(weights)
        rows = np.asarray(self.rows, dtype=np.intp)
        cols = np.asarray(self.cols, dtype=np.intp)
        vals = np.asarray(self.vals, dtype=np.complex128)
        # scale each triplet by the same real product so conjugate pairs stay exact
        vals = vals * (dinv[rows] * dinv[cols])
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
        return mat.tocsr()


def assemble_dirac(graph: MetricGraph, grid: Grid, params: PhysParams) -> HermitianOperator:
    """Dirac operator with Kirchhoff-type vertex conditions on the spinor layout.

    Interior rows are the staggered differences (chi differences feed phi
    rows and vice versa); the shared-vertex phi row is the quadrature-weighted
    sum of the per-edge first-component equations, which enforces the signed
    chi-sum condition weakly; truncated far ends use a zero ghost chi.
    """
    if grid.graph is not graph:
        raise AssemblyError("grid was built over a different graph")
    b = _SymmetricBuilder()
    ic = 1j * params.c
    mc2 = params.rest_energy
    n_phi = grid.n_phi
    for e in graph.edges:
        h = grid.h(e.id)
        mcount = grid.m(e.id)
        pslots = grid.phi_slots(e.id)
        cbase = grid.chi_slot(e.id, 0)
        for j in range(mcount):
            ci = n_phi + cbase + j
            # chi row at j+1/2: -i c (phi_{j+1}-phi_j)/h, form entries -/+ i c
            b.pair(ci, int(pslots[j + 1]), -ic)
            b.pair(ci, int(pslots[j]), +ic)
    for i, w in enumerate(grid.phi_weights):
        b.diag(i, mc2 * w)
    for i, w in enumerate(grid.chi_weights):
        b.diag(n_phi + i, -mc2 * w)
    mat = b.build(grid.n_spinor, grid.spinor_weights)
    return HermitianOperator(mat, grid.spinor_weights, grid, kind="DIRAC", component="spinor")


FarBC = Literal["dirichlet", "neumann"]


def assemble_kirchhoff_laplacian(
    graph: MetricGraph,
    grid: Grid,
    mass_scale: float,
    far_bc: FarBC = "dirichlet",
) -> HermitianOperator:
    """-u''/(2*mass_scale) with Kirchhoff vertex conditions, integer-node family.

    The flux-sum vertex row arises from the cellwise stiffness contributions.
    ``far_bc`` selects the closure at truncated far ends: "dirichlet" pins the
    wall node to zero (decoupled diagonal slot), "neumann" is the natural
    zero-flux closure induced by the Dirac hard wall.
    """
    if mass_scale <= 0:
        raise AssemblyError("mass_scale must be positive")
    b = _SymmetricBuilder()
    for e in graph.edges:
        h = grid.h(e.id)
        mcount = grid.m(e.id)
        pslots = grid.phi_slots(e.id)
        t = 1.0 / (2.0 * mass_scale * h)
        wall = e.tail is None and far_bc == "dirichlet"
        for j in range(mcount):
            a_slot, b_slot = int(pslots[j]), int(pslots[j + 1])
            if wall and j == mcount - 1:
                b.diag(a_slot, t)  # last cell sees u(wall) = 0
            else:
                b.diag(a_slot, t)
                b.diag(b_slot, t)
                b.pair(a_slot, b_slot, -t)
        if wall:
            b.diag(int(pslots[mcount]), t)  # decoupled pinned node
    mat = b.build(grid.n_phi, grid.phi_weights)
    return HermitianOperator(mat, grid.phi_weights, grid, kind="LAP_KIRCHHOFF", component="integer")


def assemble_delta_prime_laplacian(
    graph: MetricGraph,
    grid: Grid,
    mass_scale: float,
    far_bc: FarBC = "dirichlet",
) -> HermitianOperator:
    """-u''/(2*mass_scale) with homogeneous delta' vertex conditions, half-node family.

    Vertex coupling eliminates the ghost value behind each vertex using
    derivative continuity plus the zero signed-value sum.  All edges incident
    at a vertex must carry the same orientation sign there (true for stars and
    degree-one vertices); mixed orientations are rejected.
    """
    if mass_scale <= 0:
        raise AssemblyError("mass_scale must be positive")
    b = _SymmetricBuilder()
    for e in graph.edges:
        h = grid.h(e.id)
        mcount = grid.m(e.id)
        base = grid.chi_slot(e.id, 0)
        t = 1.0 / (2.0 * mass_scale * h)
        for j in range(mcount - 1):
            b.diag(base + j, t)
            b.diag(base + j + 1, t)
            b.pair(base + j, base + j + 1, -t)
        if e.tail is None:
            if far_bc == "dirichlet":
                b.diag(base + mcount - 1, 2.0 * t)  # odd-reflection ghost
            # neumann: even reflection, nothing to add
    for v in range(graph.num_vertices):
        incident = graph.incident_edges(v)
        signs = {sign for _, sign in incident}
        if len(signs) > 1:
            raise AssemblyError(
                "delta' assembly needs a uniform orientation sign at each vertex"
            )
        near: list[int] = []
        h_sum = 0.0
        for eid, sign in incident:
            mcount = grid.m(eid)
            near.append(grid.chi_slot(eid, 0) if sign == +1 else grid.chi_slot(eid, mcount - 1))
            h_sum += grid.h(eid)
        coeff = 1.0 / (mass_scale * h_sum)
        for i, a_slot in enumerate(near):
            b.diag(a_slot, coeff)
            for b_slot in near[i + 1:]:
                b.pair(a_slot, b_slot, coeff)
    mat = b.build(grid.n_chi, grid.chi_weights)
    return HermitianOperator(mat, grid.chi_weights, grid, kind="LAP_DELTA_PRIME", component="half")


def assemble_big_laplacian(
    graph: MetricGraph, grid: Grid, mass_scale: float
) -> HermitianOperator:
    """Block direct sum: Kirchhoff Laplacian on first components, delta' on second.

    Far-end closures (Neumann / Dirichlet) match the Dirac hard wall, so the
    square of the assembled Dirac operator equals c^2 times this operator
    (at mass_scale 1/2) plus (m c^2)^2 exactly.
    """
    lap_k = assemble_kirchhoff_laplacian(graph, grid, mass_scale, far_bc="neumann")
    lap_d = assemble_delta_prime_laplacian(graph, grid, mass_scale, far_bc="dirichlet")
    mat = sp.block_diag([lap_k.matrix, lap_d.matrix], format="csr")
    return HermitianOperator(mat, grid.spinor_weights, grid, kind="BIG_LAPLACIAN", component="spinor")


def sigma3_diagonal(grid: Grid) -> sp.dia_matrix:
    """Diagonal +1 on phi slots, -1 on chi slots (spinor layout)."""
    d = np.concatenate([np.ones(grid.n_phi), -np.ones(grid.n_chi)])
    return sp.diags(d)


def first_component_projector(grid: Grid) -> sp.dia_matrix:
    d = np.concatenate([np.ones(grid.n_phi), np.zeros(grid.n_chi)])
    return sp.diags(d)


def second_component_projector(grid: Grid) -> sp.dia_matrix:
    d = np.concatenate([np.zeros(grid.n_phi), np.ones(grid.n_chi)])
    return sp.diags(d)


def operator_norm(
    matvec,
    rmatvec,
    dim: int,
    iters: int = 300,
    tol: float = 1e-8,
    seed: int = 0,
) -> float:
    """Largest singular value via power iteration on the normal operator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = rmatvec(matvec(v))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new_sigma = float(np.sqrt(norm))
        v = w / norm
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-300):
            return new_sigma
        sigma = new_sigma
    return sigma
