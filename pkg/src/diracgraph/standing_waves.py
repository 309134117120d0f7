"""Bound states of the nonlinear Dirac equation on infinite N-star graphs.

Strategy: the stationary problem at frequency omega = m - eps (with c = 1) is
equivalent, under the scaling

    phi_e(x) = eps^{1/(p-2)} u_e(sqrt(eps) x),
    chi_e(x) = -i eps^{p/(2p-4)} w_e(sqrt(eps) x),

to the real-reduced first-order system on the star (G = (u^2 + eps w^2)^{(p-2)/2}):

    R1:  -w' + u - G u = 0            (integer nodes)
    R2:   u' - (2m - eps) w - eps G w = 0   (half nodes)

plus continuity of u (shared vertex unknown) and the signed vertex sum of the
extrapolated w traces as a constraint row.  At eps = 0 the system collapses to
the stationary NLS  u''/(2m) + |u|^{p-2} u = u  with w = u'/(2m): its positive
solutions are closed-form sech powers, which seed a Newton continuation in
eps.  Converged states back-scale to spinor bound states with a residual
certificate against the original componentwise equations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .fields import Grid, GridSpec, ScalarField, SpinorField, chi_to_integer_nodes, l2_norm
from .graphs import TopologyError
from .operators import HermitianOperator, PhysParams


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class BranchTerminationError(RuntimeError):
    def __init__(self, message: str, partial: "Branch"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SolitonSpec:
    """Closed-form positive stationary NLS profile on an N-star.

    For odd N the solution is unique (shift = 0); for even N there is a
    one-parameter family indexed by shift >= 0: the profile is translated
    outward on the first N/2 half-lines and inward on the rest.
    """

    p: float
    m: float
    n_edges: int
    shift: float = 0.0

    def __post_init__(self) -> None:
        if self.p <= 2:
            raise ValueError("p must exceed 2")
        if self.m <= 0:
            raise ValueError("m must be positive")
        if self.n_edges < 2:
            raise ValueError("need at least 2 half-lines")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        if self.n_edges % 2 == 1 and self.shift != 0.0:
            raise ValueError("odd N admits only the unshifted profile")

    @property
    def amplitude(self) -> float:
        """Peak value c_p = (p/2)^{1/(p-2)}."""
        return (self.p / 2.0) ** (1.0 / (self.p - 2.0))

    @property
    def sech_power(self) -> float:
        """Exponent gamma_p = 2/(p-2)."""
        return 2.0 / (self.p - 2.0)

    @property
    def decay_rate(self) -> float:
        """Width parameter delta_{p,m} = sqrt(2m)/gamma_p."""
        return math.sqrt(2.0 * self.m) / self.sech_power

    def edge_offset(self, edge: int) -> float:
        """Argument shift on ``edge``: profile(x + offset)."""
        if self.n_edges % 2 == 1 or self.shift == 0.0:
            return 0.0
        return -self.shift if edge < self.n_edges // 2 else +self.shift


def soliton_profile(spec: SolitonSpec, t) -> np.ndarray:
    """c_p * sech(delta*t)^gamma, elementwise."""
    t = np.asarray(t, dtype=float)
    return spec.amplitude * (1.0 / np.cosh(spec.decay_rate * t)) ** spec.sech_power


def soliton_profile_derivative(spec: SolitonSpec, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    d = spec.decay_rate
    sech = 1.0 / np.cosh(d * t)
    return -spec.amplitude * spec.sech_power * d * sech**spec.sech_power * np.tanh(d * t)


def soliton_eval(spec: SolitonSpec, edge: int, x) -> np.ndarray:
    """Profile value on ``edge`` at coordinate x >= 0."""
    if not 0 <= edge < spec.n_edges:
        raise ValueError(f"edge index {edge} out of range")
    return soliton_profile(spec, np.asarray(x, dtype=float) + spec.edge_offset(edge))


def soliton_derivative(spec: SolitonSpec, edge: int, x) -> np.ndarray:
    return soliton_profile_derivative(spec, np.asarray(x, dtype=float) + spec.edge_offset(edge))


def soliton_field(spec: SolitonSpec, grid: Grid) -> ScalarField:
    """Profile sampled on the integer nodes (far wall nodes forced to zero)."""
    f = ScalarField.zeros(grid, family="integer")
    for e in grid.graph.edges:
        f.data[grid.phi_slots(e.id)] = soliton_eval(spec, e.id, grid.x_int(e.id))
    far = grid.far_phi_slots()
    f.data[far] = 0.0
    return f


@dataclass
class RescaledState:
    """Real pair (u, w) of the reduced system; the complex second component is
    v = -i w."""

    eps: float
    u: ScalarField
    w: ScalarField

    def copy(self) -> "RescaledState":
        return RescaledState(self.eps, self.u.copy(), self.w.copy())

    @property
    def grid(self) -> Grid:
        return self.u.grid


def seed_state(spec: SolitonSpec, grid: Grid) -> RescaledState:
    """Branch seed at eps = 0: u the closed-form profile, w = u'/(2m)."""
    grid.graph.require_star()
    if len(grid.graph.edges) != spec.n_edges:
        raise TopologyError("grid star size does not match the soliton spec")
    u = soliton_field(spec, grid)
    w = ScalarField.zeros(grid, family="half")
    for e in grid.graph.edges:
        w.data[grid.chi_slice(e.id)] = (
            soliton_derivative(spec, e.id, grid.x_half(e.id)) / (2.0 * spec.m)
        )
    return RescaledState(eps=0.0, u=u, w=w)


def _g_and_derivative(base: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """G = base^{(p-2)/2} and dG/dbase, with the singular factor zeroed at
    field zeros when 2 < p < 4."""
    g = base ** ((p - 2.0) / 2.0)
    if p >= 4.0:
        dg = 0.5 * (p - 2.0) * base ** ((p - 4.0) / 2.0)
    else:
        with np.errstate(divide="ignore"):
            dg = np.where(base > 1e-300, 0.5 * (p - 2.0) * base ** ((p - 4.0) / 2.0), 0.0)
    return g, dg


class RescaledSystem:
    """Discrete residual/Jacobian of the reduced system on a star grid.

    Unknowns: active integer-node values of u (far wall nodes pinned to 0)
    followed by all half-node values of w.  Rows: R1 at interior integer
    nodes, R2 at every half node, then one signed w-trace sum per vertex.
    """

    def __init__(self, grid: Grid, p: float, m: float):
        grid.graph.require_star()
        self.grid = grid
        self.p = float(p)
        self.m = float(m)
        far = set(int(s) for s in grid.far_phi_slots())
        self.phi_to_unknown = -np.ones(grid.n_phi, dtype=np.intp)
        idx = 0
        for s in range(grid.n_phi):
            if s not in far:
                self.phi_to_unknown[s] = idx
                idx += 1
        self.n_active_phi = idx
        self.dim = self.n_active_phi + grid.n_chi
        self.n_r1 = sum(grid.m(e.id) - 1 for e in grid.graph.edges)
        self._r1_base: dict[int, int] = {}
        off = 0
        for e in grid.graph.edges:
            self._r1_base[e.id] = off
            off += grid.m(e.id) - 1

    # -- state/vector conversions ---------------------------------------------

    def state_to_unknowns(self, state: RescaledState) -> np.ndarray:
        x = np.empty(self.dim)
        active = self.phi_to_unknown >= 0
        x[self.phi_to_unknown[active]] = state.u.data[active]
        x[self.n_active_phi:] = state.w.data
        return x

    def unknowns_to_state(self, eps: float, x: np.ndarray) -> RescaledState:
        u = ScalarField.zeros(self.grid, family="integer")
        active = self.phi_to_unknown >= 0
        u.data[active] = x[self.phi_to_unknown[active]]
        w = ScalarField(self.grid, x[self.n_active_phi:].copy(), family="half")
        return RescaledState(eps=eps, u=u, w=w)

    # -- residual --------------------------------------------------------------

    def residual(self, state: RescaledState) -> np.ndarray:
        grid, p, m, eps = self.grid, self.p, self.m, state.eps
        out = np.empty(self.dim)
        r2_base = self.n_r1
        for e in grid.graph.edges:
            h = grid.h(e.id)
            u = state.u.data[grid.phi_slots(e.id)]
            w = state.w.data[grid.chi_slice(e.id)]
            ubar = 0.5 * (u[:-1] + u[1:])
            g_half, _ = _g_and_derivative(ubar**2 + eps * w**2, p)
            r2 = (u[1:] - u[:-1]) / h - (2.0 * m - eps) * w - eps * g_half * w
            out[r2_base + grid.chi_slot(e.id, 0):
                r2_base + grid.chi_slot(e.id, 0) + grid.m(e.id)] = r2
            umid = u[1:-1]
            wbar = 0.5 * (w[:-1] + w[1:])
            g_int, _ = _g_and_derivative(umid**2 + eps * wbar**2, p)
            r1 = -(w[1:] - w[:-1]) / h + umid - g_int * umid
            base = self._r1_base[e.id]
            out[base: base + grid.m(e.id) - 1] = r1
        row = self.n_r1 + grid.n_chi
        for v in range(grid.graph.num_vertices):
            total = 0.0
            for eid, sign in grid.graph.incident_edges(v):
                w = state.w.data[grid.chi_slice(eid)]
                if sign == +1:
                    total += 0.5 * (3.0 * w[0] - w[1])
                else:
                    total -= 0.5 * (3.0 * w[-1] - w[-2])
            out[row + v] = total
        return out

    def residual_complex_pair(self, state: RescaledState) -> np.ndarray:
        """Residual of the complex first-order pair evaluated with v = -i w.

        Returns the same stacked rows as :meth:`residual` (R1 rows are the
        first complex equation; R2 rows are i times the second), which should
        agree entrywise to machine precision with the real reduction.
        """
        grid, p, m, eps = self.grid, self.p, self.m, state.eps
        out = np.empty(self.dim, dtype=np.complex128)
        r2_base = self.n_r1
        for e in grid.graph.edges:
            h = grid.h(e.id)
            u = state.u.data[grid.phi_slots(e.id)].astype(np.complex128)
            v = -1j * state.w.data[grid.chi_slice(e.id)]
            vbar_int = np.empty(len(v) + 1, dtype=np.complex128)
            vbar_int[0], vbar_int[-1] = v[0], v[-1]
            vbar_int[1:-1] = 0.5 * (v[:-1] + v[1:])
            ubar = 0.5 * (u[:-1] + u[1:])
            g_half = (np.abs(ubar) ** 2 + eps * np.abs(v) ** 2) ** ((p - 2) / 2)
            second = -1j * (u[1:] - u[:-1]) / h - (2 * m - eps) * v - eps * g_half * v
            out[r2_base + grid.chi_slot(e.id, 0):
                r2_base + grid.chi_slot(e.id, 0) + grid.m(e.id)] = 1j * second
            umid = u[1:-1]
            g_int = (np.abs(umid) ** 2 + eps * np.abs(vbar_int[1:-1]) ** 2) ** ((p - 2) / 2)
            first = -1j * (v[1:] - v[:-1]) / h + umid - g_int * umid
            base = self._r1_base[e.id]
            out[base: base + grid.m(e.id) - 1] = first
        row = self.n_r1 + grid.n_chi
        for vtx in range(grid.graph.num_vertices):
            total = 0.0 + 0.0j
            for eid, sign in grid.graph.incident_edges(vtx):
                v = -1j * state.w.data[grid.chi_slice(eid)]
                if sign == +1:
                    total += 0.5 * (3.0 * v[0] - v[1])
                else:
                    total -= 0.5 * (3.0 * v[-1] - v[-2])
            out[row + vtx] = 1j * total
        return out

    # -- Jacobian ----------------------------------------------------------------

    def jacobian(self, state: RescaledState) -> sp.csr_matrix:
        grid, p, m, eps = self.grid, self.p, self.m, state.eps
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []

        def add(r, c, v):
            keep = c >= 0
            rows.append(np.asarray(r)[keep])
            cols.append(np.asarray(c)[keep])
            vals.append(np.asarray(v)[keep])

        for e in grid.graph.edges:
            h = grid.h(e.id)
            mcount = grid.m(e.id)
            pslots = grid.phi_slots(e.id)
            ucols = self.phi_to_unknown[pslots]
            wcols = self.n_active_phi + np.arange(grid.chi_slot(e.id, 0),
                                                  grid.chi_slot(e.id, 0) + mcount)
            u = state.u.data[pslots]
            w = state.w.data[grid.chi_slice(e.id)]

            # R2 rows, one per half node
            r2_rows = self.n_r1 + (wcols - self.n_active_phi)
            ubar = 0.5 * (u[:-1] + u[1:])
            g_half, dg_half = _g_and_derivative(ubar**2 + eps * w**2, p)
            add(r2_rows, ucols[:-1], -1.0 / h - eps * dg_half * w * ubar)
            add(r2_rows, ucols[1:], +1.0 / h - eps * dg_half * w * ubar)
            add(r2_rows, wcols,
                -(2.0 * m - eps) - eps * g_half - 2.0 * eps**2 * dg_half * w**2)

            # R1 rows, one per interior integer node
            r1_rows = self._r1_base[e.id] + np.arange(mcount - 1)
            umid = u[1:-1]
            wbar = 0.5 * (w[:-1] + w[1:])
            g_int, dg_int = _g_and_derivative(umid**2 + eps * wbar**2, p)
            add(r1_rows, ucols[1:-1], 1.0 - g_int - 2.0 * dg_int * umid**2)
            add(r1_rows, wcols[:-1], +1.0 / h - eps * dg_int * umid * wbar)
            add(r1_rows, wcols[1:], -1.0 / h - eps * dg_int * umid * wbar)

        row0 = self.n_r1 + grid.n_chi
        for v in range(grid.graph.num_vertices):
            for eid, sign in grid.graph.incident_edges(v):
                c0 = self.n_active_phi + grid.chi_slot(eid, 0)
                clast = self.n_active_phi + grid.chi_slot(eid, grid.m(eid) - 1)
                if sign == +1:
                    add(np.array([row0 + v, row0 + v]), np.array([c0, c0 + 1]),
                        np.array([1.5, -0.5]))
                else:
                    add(np.array([row0 + v, row0 + v]), np.array([clast, clast - 1]),
                        np.array([-1.5, 0.5]))

        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        return mat.tocsr()

    def jacobian_min_singular_value(
        self, state: RescaledState, iters: int = 200, tol: float = 1e-8
    ) -> float:
        """1/||J^{-1}||_2 by power iteration on (J^T J)^{-1} through LU solves."""
        lu = spla.splu(self.jacobian(state).tocsc())
        rng = np.random.default_rng(12345)
        v = rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            y = lu.solve(lu.solve(v, trans="T"))
            norm = np.linalg.norm(y)
            if norm == 0.0:
                return math.inf
            v = y / norm
            if abs(norm - lam) <= tol * norm:
                lam = norm
                break
            lam = norm
        return 1.0 / math.sqrt(lam)


@dataclass
class NewtonReport:
    iterations: int
    residual_norm: float
    history: list[float] = field(default_factory=list)


def newton_solve(
    system: RescaledSystem,
    initial: RescaledState,
    eps: float,
    tol: float = 1e-10,
    max_iter: int = 25,
) -> tuple[RescaledState, NewtonReport]:
    """Newton iteration at fixed eps from ``initial``; sup-norm tolerance."""
    x = system.state_to_unknowns(initial)
    state = system.unknowns_to_state(eps, x)
    history: list[float] = []
    for it in range(max_iter + 1):
        res = system.residual(state)
        rnorm = float(np.max(np.abs(res)))
        history.append(rnorm)
        if rnorm <= tol:
            return state, NewtonReport(iterations=it, residual_norm=rnorm, history=history)
        if it == max_iter:
            break
        jac = system.jacobian(state).tocsc()
        try:
            step = spla.splu(jac).solve(res)
        except Exception as exc:
            raise NonConvergenceError(f"Jacobian solve failed: {exc}", rnorm) from exc
        x = x - step
        state = system.unknowns_to_state(eps, x)
    raise NonConvergenceError(
        f"Newton did not reach tol={tol} in {max_iter} iterations", history[-1]
    )


@dataclass
class BranchPoint:
    eps: float
    state: RescaledState
    newton_iters: int
    residual_norm: float
    jacobian_min_singular_value: float


@dataclass
class Branch:
    points: list[BranchPoint]

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)


def continue_branch(
    spec: SolitonSpec,
    grid: Grid,
    eps_max: float,
    eps_step: float,
    tol: float = 1e-10,
    min_step: float = 1e-4,
    compute_min_singular_value: bool = True,
) -> Branch:
    """March the solution branch from eps = 0 towards eps_max.

    The predictor is the previous solution; the step halves on a Newton
    failure and the march aborts below ``min_step`` with the partial branch
    attached to the raised error.  Negative eps_max walks the branch on the
    other side of the bifurcation point.
    """
    if eps_step <= 0:
        raise ValueError("eps_step must be positive")
    system = RescaledSystem(grid, spec.p, spec.m)
    state, report = newton_solve(system, seed_state(spec, grid), eps=0.0, tol=tol)
    sv = (
        system.jacobian_min_singular_value(state)
        if compute_min_singular_value
        else math.nan
    )
    points = [BranchPoint(0.0, state, report.iterations, report.residual_norm, sv)]
    if eps_max == 0.0:
        return Branch(points)
    direction = 1.0 if eps_max > 0 else -1.0
    step = eps_step
    eps = 0.0
    while (eps_max - eps) * direction > 1e-14:
        target = eps + direction * min(step, abs(eps_max - eps))
        try:
            new_state, report = newton_solve(system, points[-1].state, target, tol=tol)
        except NonConvergenceError as exc:
            step /= 2.0
            if step < min_step:
                raise BranchTerminationError(
                    f"continuation step underflow near eps={eps:.6g}: {exc}",
                    Branch(points),
                ) from exc
            continue
        sv = (
            system.jacobian_min_singular_value(new_state)
            if compute_min_singular_value
            else math.nan
        )
        points.append(
            BranchPoint(target, new_state, report.iterations, report.residual_norm, sv)
        )
        eps = target
    return Branch(points)


# -- back-scaling to physical bound states -------------------------------------


def scaling_constants(eps: float, p: float) -> tuple[float, float, float]:
    """(lambda, alpha, beta) = (sqrt(eps), eps^{1/(p-2)}, eps^{p/(2p-4)})."""
    if eps <= 0:
        raise ValueError("scaling constants require eps > 0")
    return math.sqrt(eps), eps ** (1.0 / (p - 2.0)), eps ** (p / (2.0 * p - 4.0))


def scale_to_physical(
    state: RescaledState,
    params: PhysParams,
    target_grid: Grid | None = None,
) -> tuple[SpinorField, float]:
    """Back-scale a converged rescaled state into a spinor bound state.

    Returns (psi, omega) with omega = m - eps.  Requires c = 1 and eps > 0
    (the equivalence with the stationary problem holds only there).  Without a
    target grid the output lives on the image grid x = y/sqrt(eps) and the
    node values map one-to-one; with a target grid values are obtained by
    cubic interpolation of the rescaled profiles.
    """
    if params.c != 1.0:
        raise ValueError("back-scaling is implemented for c = 1 only")
    if state.eps <= 0:
        raise ValueError("physical bound states exist only for eps > 0")
    lam, alpha, beta = scaling_constants(state.eps, params.p)
    omega = params.m - state.eps
    src = state.grid
    if target_grid is None:
        spec = GridSpec(
            graph=src.graph,
            spacing=tuple(h / lam for h in src.spec.spacing),
            counts=src.spec.counts,
        )
        out_grid = Grid(spec)
        psi = SpinorField.zeros(out_grid)
        psi.data[: out_grid.n_phi] = alpha * state.u.data
        psi.data[out_grid.n_phi:] = -1j * beta * state.w.data
        return psi, omega
    psi = SpinorField.zeros(target_grid)
    for e in src.graph.edges:
        x_u = src.x_int(e.id)
        x_w = src.x_half(e.id)
        u_spline = CubicSpline(x_u, state.u.data[src.phi_slots(e.id)])
        w_spline = CubicSpline(x_w, state.w.data[src.chi_slice(e.id)])
        xt_int = lam * target_grid.x_int(e.id)
        xt_half = lam * target_grid.x_half(e.id)
        uu = np.where(xt_int <= x_u[-1], u_spline(np.minimum(xt_int, x_u[-1])), 0.0)
        # half nodes below h_src/2 use the spline's smooth left extrapolation
        ww = np.where(xt_half <= x_w[-1], w_spline(np.minimum(xt_half, x_w[-1])), 0.0)
        psi.set_phi_edge(e.id, alpha * uu)
        psi.set_chi_edge(e.id, -1j * beta * ww)
    psi.data[target_grid.far_phi_slots()] = 0.0
    return psi, omega


def nlde_residual(psi: SpinorField, omega: float, params: PhysParams) -> float:
    """Sup-norm residual of the componentwise stationary system.

    First equation at interior integer nodes, second at half nodes, plus the
    vertex-condition residuals; chi is collocated to integer nodes by value
    averaging.
    """
    from .fields import vertex_residuals

    grid = psi.grid
    m, p = params.m, params.p
    worst = 0.0
    for e in grid.graph.edges:
        h = grid.h(e.id)
        phi = psi.phi_edge(e.id)
        chi = psi.chi_edge(e.id)
        chi_bar = chi_to_integer_nodes(psi, e.id)
        dens_int = np.abs(phi) ** 2 + np.abs(chi_bar) ** 2
        g_int = dens_int ** ((p - 2) / 2)
        eq1 = (
            -1j * (chi[1:] - chi[:-1]) / h
            + (m - omega) * phi[1:-1]
            - g_int[1:-1] * phi[1:-1]
        )
        phibar = 0.5 * (phi[:-1] + phi[1:])
        dens_half = np.abs(phibar) ** 2 + np.abs(chi) ** 2
        g_half = dens_half ** ((p - 2) / 2)
        eq2 = -1j * (phi[1:] - phi[:-1]) / h - (m + omega) * chi - g_half * chi
        worst = max(worst, float(np.max(np.abs(eq1))), float(np.max(np.abs(eq2))))
    for res in vertex_residuals(psi).values():
        worst = max(worst, abs(res.kirchhoff_sum))
    return worst


def action_value(psi: SpinorField, omega: float, dirac_op: HermitianOperator, p: float) -> float:
    """Action L(psi) = E(psi) - (omega/2) * ||psi||^2."""
    from .evolution import energy

    return energy(psi, dirac_op, p) - 0.5 * omega * l2_norm(psi) ** 2
