"""Time integration of the nonlinear Dirac flow by Strang splitting.

One step of size dt composes a half-step of the exact pointwise nonlinear
phase rotation, a Crank-Nicolson (Cayley) step of the linear Dirac flow, and
another half phase rotation.  The Cayley transform of a Hermitian matrix is
unitary, so the discrete L2 norm is conserved to the linear-solver tolerance;
the phase rotations conserve every nodal modulus exactly.

The pointwise density |psi|^2 on the staggered grid collocates the opposite
component by averaging the squared moduli of the adjacent nodes, which makes
the half phase rotation the exact flow of its subproblem.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import SpinorField, l2_norm, lp_power_integral
from .operators import HermitianOperator, SolverError


class EvolutionError(RuntimeError):
    """Solver failure mid-run; carries the trajectory up to the failure."""

    def __init__(self, message: str, partial: "Trajectory"):
        super().__init__(message)
        self.partial = partial


@dataclass
class EvolutionConfig:
    dt: float
    t_end: float
    linear_solver_rtol: float = 1e-12
    blowup_factor: float = 1e3
    sign_of_nonlinearity: int = +1
    record_every: int = 1
    store_fields: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least one step")
        if self.sign_of_nonlinearity not in (+1, -1):
            raise ValueError("sign_of_nonlinearity must be +1 or -1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


class CayleyStepper:
    """Unitary step psi -> (I + i dt/2 A)^{-1} (I - i dt/2 A) psi."""

    def __init__(self, op: HermitianOperator, dt: float, rtol: float = 1e-12):
        self.op = op
        self.dt = dt
        self.rtol = rtol
        n = op.dim
        eye = sp.eye(n, format="csr")
        self._rhs = (eye - 0.5j * dt * op.matrix).tocsr()
        self._lhs = (eye + 0.5j * dt * op.matrix).tocsr()
        self._lu = spla.splu(self._lhs.tocsc())

    def step_vec(self, vec: np.ndarray) -> np.ndarray:
        if self.dt == 0.0:
            return vec.copy()
        rhs = self._rhs @ vec
        out = self._lu.solve(rhs)
        res = np.linalg.norm(self._lhs @ out - rhs)
        bnorm = np.linalg.norm(rhs)
        if bnorm > 0 and res > 10.0 * self.rtol * bnorm:
            out = out + self._lu.solve(rhs - self._lhs @ out)
            res = np.linalg.norm(self._lhs @ out - rhs)
            if res > 10.0 * self.rtol * bnorm:
                raise SolverError("Crank-Nicolson solve missed its tolerance", residual=res)
        return out

    def step_field(self, psi: SpinorField) -> SpinorField:
        if self.dt == 0.0:
            return psi.copy()
        return self.op.vec_to_field(self.step_vec(self.op.field_to_vec(psi)))


def linear_cn_step(psi: SpinorField, dt: float, dirac_op: HermitianOperator,
                   rtol: float = 1e-12) -> SpinorField:
    """One Crank-Nicolson step of the linear Dirac group."""
    return CayleyStepper(dirac_op, dt, rtol).step_field(psi)


def pointwise_density(psi: SpinorField) -> np.ndarray:
    """|psi|^2 per node over the spinor layout.

    Each node adds its own |component|^2 and the mean of the squared moduli of
    the adjacent nodes of the other component (vertices average over all
    incident edges).
    """
    grid = psi.grid
    dens = np.abs(psi.data) ** 2
    out = dens.copy()
    acc = np.zeros(grid.n_phi)
    cnt = np.zeros(grid.n_phi)
    for e in grid.graph.edges:
        pslots = grid.phi_slots(e.id)
        chi2 = dens[grid.n_phi + np.arange(grid.chi_slot(e.id, 0),
                                           grid.chi_slot(e.id, 0) + grid.m(e.id))]
        np.add.at(acc, pslots[:-1], chi2)
        np.add.at(cnt, pslots[:-1], 1.0)
        np.add.at(acc, pslots[1:], chi2)
        np.add.at(cnt, pslots[1:], 1.0)
        phi2 = dens[pslots]
        out[grid.n_phi + grid.chi_slot(e.id, 0):
            grid.n_phi + grid.chi_slot(e.id, 0) + grid.m(e.id)] += 0.5 * (phi2[:-1] + phi2[1:])
    out[: grid.n_phi] += acc / np.maximum(cnt, 1.0)
    return out


def nonlinear_phase_step(psi: SpinorField, tau: float, p: float, sign: int = +1) -> SpinorField:
    """Exact flow of the pointwise subproblem: a modulus-preserving rotation."""
    dens = pointwise_density(psi)
    angle = sign * tau * dens ** ((p - 2.0) / 2.0)
    return SpinorField(psi.grid, psi.data * np.exp(1j * angle))


def nonlinearity_field(psi: SpinorField, p: float) -> SpinorField:
    """|psi|^{p-2} psi with the same collocation as the phase step."""
    dens = pointwise_density(psi)
    return SpinorField(psi.grid, dens ** ((p - 2.0) / 2.0) * psi.data)


def strang_step(psi: SpinorField, dt: float, stepper: CayleyStepper, p: float,
                sign: int = +1) -> SpinorField:
    half = nonlinear_phase_step(psi, 0.5 * dt, p, sign)
    full = stepper.step_field(half)
    return nonlinear_phase_step(full, 0.5 * dt, p, sign)


def energy(psi: SpinorField, dirac_op: HermitianOperator, p: float) -> float:
    """E = (1/2) Re<psi, D psi> - (1/p) * integral of |psi|^p."""
    quad = 0.5 * np.real(dirac_op.quadratic_form(psi))
    return float(quad - lp_power_integral(psi, p) / p)


def graph_norm(psi: SpinorField, dirac_op: HermitianOperator) -> float:
    """||psi|| + ||D psi|| (the operator-domain norm)."""
    vec = dirac_op.field_to_vec(psi)
    return float(np.linalg.norm(vec) + np.linalg.norm(dirac_op.matrix @ vec))


@dataclass
class EvolutionState:
    t: float
    mass: float
    energy: float
    graph_norm: float
    psi: SpinorField | None = None


@dataclass
class Trajectory:
    states: list[EvolutionState] = field(default_factory=list)
    termination: str = "COMPLETED"
    final_psi: SpinorField | None = None
    dt: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.states])


def evolve(psi0: SpinorField, config: EvolutionConfig,
           dirac_op: HermitianOperator, p: float) -> Trajectory:
    """Integrate the Cauchy problem and record diagnostics.

    Terminates early with BLOWUP_FLAGGED when the operator-domain norm exceeds
    blowup_factor times its initial value (a numerical proxy only; no claim is
    made about an actual blow-up time).
    """
    stepper = CayleyStepper(dirac_op, config.dt, config.linear_solver_rtol)
    sign = config.sign_of_nonlinearity
    n_steps = int(round(config.t_end / config.dt))
    traj = Trajectory(dt=config.dt)

    def record(t: float, psi: SpinorField) -> EvolutionState:
        st = EvolutionState(
            t=t,
            mass=l2_norm(psi) ** 2,
            energy=energy(psi, dirac_op, p),
            graph_norm=graph_norm(psi, dirac_op),
            psi=psi.copy() if config.store_fields else None,
        )
        traj.states.append(st)
        return st

    psi = psi0.copy()
    first = record(0.0, psi)
    threshold = config.blowup_factor * first.graph_norm
    for k in range(1, n_steps + 1):
        try:
            psi = strang_step(psi, config.dt, stepper, p, sign)
        except SolverError as exc:
            traj.final_psi = psi
            raise EvolutionError(f"linear solve failed at step {k}: {exc}", traj) from exc
        t = k * config.dt
        if k % config.record_every == 0 or k == n_steps:
            st = record(t, psi)
            if st.graph_norm > threshold:
                traj.termination = "BLOWUP_FLAGGED"
                traj.final_psi = psi
                return traj
    traj.final_psi = psi
    return traj


def duhamel_residual(traj: Trajectory, dirac_op: HermitianOperator, p: float,
                     sign: int = +1, rtol: float = 1e-12) -> np.ndarray:
    """Residual of the integral form of the equation at every recorded time.

    Compares psi(t) with U(t) psi0 + i*sign * integral of U(t-s)|psi|^{p-2}psi
    where U is realized by Crank-Nicolson substeps and the time integral by
    the trapezoid rule over the recorded states (which must be every step).
    """
    if any(s.psi is None for s in traj.states):
        raise ValueError("duhamel_residual needs a trajectory with stored fields")
    times = traj.times
    if len(times) < 2:
        return np.zeros(len(times))
    dts = np.diff(times)
    if not np.allclose(dts, traj.dt, rtol=0, atol=1e-12):
        raise ValueError("duhamel_residual needs one recorded state per step")
    dt = traj.dt
    stepper = CayleyStepper(dirac_op, dt, rtol)
    out = np.zeros(len(times))
    free = dirac_op.field_to_vec(traj.states[0].psi)
    nl_prev = dirac_op.field_to_vec(nonlinearity_field(traj.states[0].psi, p))
    # interior running sum: g_0 enters with dt/2, later samples with dt; the
    # current endpoint is added with dt/2 only when the residual is evaluated
    interior = np.zeros_like(free)
    for n in range(1, len(times)):
        weight = 0.5 * dt if n == 1 else dt
        interior = stepper.step_vec(interior + weight * nl_prev)
        free = stepper.step_vec(free)
        nl_prev = dirac_op.field_to_vec(nonlinearity_field(traj.states[n].psi, p))
        psi_vec = dirac_op.field_to_vec(traj.states[n].psi)
        integral = interior + 0.5 * dt * nl_prev
        out[n] = float(np.linalg.norm(psi_vec - free - 1j * sign * integral))
    return out
