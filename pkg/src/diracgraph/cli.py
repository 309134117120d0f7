"""Batch command-line frontend.

Verbs: soliton | evolve | branch | nonrel | resolvent-check, each driven by a
single TOML config file.  Outputs are CSV tables and JSON summaries with
deterministic content and file names; the same config and seed produce
byte-identical artifacts.

Exit codes: 0 ok, 2 config error, 3 blow-up flagged, 4 solver/check error,
5 partial branch.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import evolution as evo
from . import resolvent as rsl
from . import standing_waves as sw
from .fields import Grid, GridSpec, SpinorField, l2_norm, write_snapshot_csv
from .graphs import StarSpec, make_star
from .operators import PhysParams, SolverError, assemble_dirac


class ConfigError(ValueError):
    pass


_SCHEMA: dict[str, dict[str, type]] = {
    "": {"rng_seed": int, "out_dir": str},
    "graph": {"star_n": int, "truncation": float, "spacing": float},
    "physics": {"m": float, "c": float, "p": float},
    "evolution": {
        "dt": float,
        "t_end": float,
        "initial": str,
        "eps": float,
        "amplitude_factor": float,
        "record_every": int,
        "blowup_factor": float,
        "sign_of_nonlinearity": int,
        "compute_duhamel": bool,
        "rescaled_spacing": float,
        "rescaled_truncation": float,
        "linear_solver_rtol": float,
    },
    "branch": {
        "eps_max": float,
        "eps_step": float,
        "shift": float,
        "newton_tol": float,
        "snapshot_eps": list,
        "compute_min_singular_value": bool,
    },
    "sweep": {"c_list": list, "k_re": float, "k_im": float},
    "resolvent": {
        "k_re": float,
        "k_im": float,
        "corrupt_b2_prefactor": bool,
        "num_samples": int,
        "identity_rtol": float,
        "crosscheck_rtol": float,
        "factorization_rtol": float,
    },
}


def _check_keys(section: str, table: dict) -> None:
    allowed = _SCHEMA[section]
    for key, value in table.items():
        if section == "" and isinstance(value, dict):
            if key not in _SCHEMA:
                raise ConfigError(f"unknown config section [{key}]")
            _check_keys(key, value)
            continue
        if key not in allowed:
            where = f"[{section}]" if section else "top level"
            raise ConfigError(f"unknown key {key!r} at {where}")
        want = allowed[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            continue
        if want in (int, float) and isinstance(value, bool):
            raise ConfigError(f"key {key!r} must be a number")
        if not isinstance(value, want):
            raise ConfigError(f"key {key!r} must be of type {want.__name__}")


@dataclass
class RunConfig:
    raw: dict
    seed: int
    out_dir: Path

    @classmethod
    def load(cls, path: str, out_override: str | None, seed_override: int | None) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        with open(p, "rb") as handle:
            try:
                raw = tomllib.load(handle)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"invalid TOML: {exc}") from exc
        _check_keys("", raw)
        seed = seed_override if seed_override is not None else int(raw.get("rng_seed", 0))
        out_dir = Path(out_override or raw.get("out_dir", "out"))
        return cls(raw=raw, seed=seed, out_dir=out_dir)

    def section(self, name: str, required: bool = True) -> dict:
        table = self.raw.get(name)
        if table is None:
            if required:
                raise ConfigError(f"missing config section [{name}]")
            return {}
        return table

    def grid(self) -> Grid:
        g = self.section("graph")
        try:
            star = make_star(StarSpec(n_edges=int(g.get("star_n", 3)),
                                      truncation_length=float(g.get("truncation", 30.0))))
            spec = GridSpec.uniform(star, float(g.get("spacing", 0.05)),
                                    float(g.get("truncation", 30.0)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return Grid(spec)

    def physics(self) -> PhysParams:
        ph = self.section("physics")
        try:
            return PhysParams(m=float(ph.get("m", 0.5)), c=float(ph.get("c", 1.0)),
                              p=float(ph.get("p", 4.0)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if v is not None else "" for v in row])


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


# -- commands -------------------------------------------------------------------


def cmd_soliton(cfg: RunConfig) -> int:
    grid = cfg.grid()
    params = cfg.physics()
    branch_cfg = cfg.section("branch", required=False)
    shift = float(branch_cfg.get("shift", 0.0))
    try:
        spec = sw.SolitonSpec(p=params.p, m=params.m,
                              n_edges=len(grid.graph.edges), shift=shift)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    profile = sw.soliton_field(spec, grid)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot_csv(profile, cfg.out_dir / "soliton_profile.csv")
    _write_json(cfg.out_dir / "soliton_constants.json", {
        "c_p": spec.amplitude,
        "gamma_p": spec.sech_power,
        "delta": spec.decay_rate,
        "p": params.p,
        "m": params.m,
        "n_edges": spec.n_edges,
        "shift": shift,
    })
    return 0


def _standing_wave_initial(grid: Grid, params: PhysParams,
                           eps: float, rescaled_spacing: float,
                           rescaled_truncation: float | None) -> SpinorField:
    spec = sw.SolitonSpec(p=params.p, m=params.m, n_edges=len(grid.graph.edges))
    trunc = rescaled_truncation or max(30.0 / spec.decay_rate, 10.0)
    rstar = make_star(StarSpec(n_edges=spec.n_edges, truncation_length=trunc))
    rgrid = Grid(GridSpec.uniform(rstar, rescaled_spacing, trunc))
    branch = sw.continue_branch(spec, rgrid, eps_max=eps,
                                eps_step=min(0.01, eps / 4.0),
                                compute_min_singular_value=False)
    psi, _omega = sw.scale_to_physical(branch.points[-1].state, params, target_grid=grid)
    return psi


def cmd_evolve(cfg: RunConfig) -> int:
    grid = cfg.grid()
    params = cfg.physics()
    ev = cfg.section("evolution")
    initial_kind = ev.get("initial", "zero")
    if initial_kind not in ("zero", "standing_wave"):
        raise ConfigError(f"unknown initial data kind {initial_kind!r}")
    try:
        config = evo.EvolutionConfig(
            dt=float(ev.get("dt", 0.01)),
            t_end=float(ev.get("t_end", 1.0)),
            linear_solver_rtol=float(ev.get("linear_solver_rtol", 1e-12)),
            blowup_factor=float(ev.get("blowup_factor", 1e3)),
            sign_of_nonlinearity=int(ev.get("sign_of_nonlinearity", 1)),
            record_every=int(ev.get("record_every", 1)),
            store_fields=bool(ev.get("compute_duhamel", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if ev.get("compute_duhamel", False) and config.record_every != 1:
        raise ConfigError("compute_duhamel needs record_every = 1")
    if initial_kind == "zero":
        psi0 = SpinorField.zeros(grid)
    else:
        eps = float(ev.get("eps", 0.05))
        if not 0 < eps < params.m * params.c**2:
            raise ConfigError("standing-wave eps must lie in (0, m c^2)")
        psi0 = _standing_wave_initial(
            grid, params, eps,
            float(ev.get("rescaled_spacing", 0.02)),
            ev.get("rescaled_truncation"),
        )
    factor = float(ev.get("amplitude_factor", 1.0))
    if factor != 1.0:
        psi0 = SpinorField(grid, psi0.data * factor)
    dirac = assemble_dirac(grid.graph, grid, params)
    traj = evo.evolve(psi0, config, dirac, params.p)
    duhamel = None
    if ev.get("compute_duhamel", False):
        duhamel = evo.duhamel_residual(traj, dirac, params.p,
                                       sign=config.sign_of_nonlinearity)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    header = ["t", "mass", "energy", "graph_norm"]
    rows: list[list] = []
    for i, st in enumerate(traj.states):
        row = [st.t, st.mass, st.energy, st.graph_norm]
        if duhamel is not None:
            row.append(float(duhamel[i]))
        rows.append(row)
    if duhamel is not None:
        header.append("duhamel_residual")
    _write_csv(cfg.out_dir / "evolution_diagnostics.csv", header, rows)
    write_snapshot_csv(psi0, cfg.out_dir / "snapshot_initial.csv")
    write_snapshot_csv(traj.final_psi, cfg.out_dir / "snapshot_final.csv")
    return 3 if traj.termination == "BLOWUP_FLAGGED" else 0


BRANCH_COLUMNS = [
    "eps", "omega", "sup_u", "sup_w", "l2_physical_mass", "action",
    "newton_iters", "min_singular_value", "residual_norm",
]


def cmd_branch(cfg: RunConfig) -> int:
    grid = cfg.grid()
    params = cfg.physics()
    br = cfg.section("branch")
    try:
        spec = sw.SolitonSpec(p=params.p, m=params.m,
                              n_edges=len(grid.graph.edges),
                              shift=float(br.get("shift", 0.0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    eps_max = float(br.get("eps_max", 0.1))
    eps_step = float(br.get("eps_step", 0.01))
    if eps_step <= 0:
        raise ConfigError("eps_step must be positive")
    snapshot_eps = [float(v) for v in br.get("snapshot_eps", [])]
    partial = False
    try:
        branch = sw.continue_branch(
            spec, grid, eps_max=eps_max, eps_step=eps_step,
            tol=float(br.get("newton_tol", 1e-10)),
            compute_min_singular_value=bool(br.get("compute_min_singular_value", True)),
        )
    except sw.BranchTerminationError as exc:
        branch = exc.partial
        partial = True
    rows: list[list] = []
    snapshots: list[tuple[float, SpinorField]] = []
    for point in branch:
        sup_u = float(np.max(np.abs(point.state.u.data)))
        sup_w = float(np.max(np.abs(point.state.w.data)))
        mass = action = omega = None
        if point.eps > 0:
            psi, omega = sw.scale_to_physical(point.state, params)
            dirac = assemble_dirac(psi.grid.graph, psi.grid, params)
            mass = l2_norm(psi) ** 2
            action = sw.action_value(psi, omega, dirac, params.p)
            if any(abs(point.eps - s) < 1e-12 for s in snapshot_eps):
                snapshots.append((point.eps, psi))
        else:
            omega = params.m * params.c**2
        sv = point.jacobian_min_singular_value
        rows.append([
            point.eps, omega, sup_u, sup_w, mass, action,
            point.newton_iters,
            sv if not math.isnan(sv) else None,
            point.residual_norm,
        ])
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out_dir / "branch.csv", BRANCH_COLUMNS, rows)
    _write_json(cfg.out_dir / "branch_summary.json", {
        "p": params.p, "m": params.m, "n_edges": spec.n_edges,
        "shift": spec.shift, "eps_max": eps_max, "eps_step": eps_step,
        "points": len(branch), "partial": partial,
    })
    for eps, psi in snapshots:
        tag = ("%g" % eps).replace(".", "p").replace("-", "m")
        write_snapshot_csv(psi, cfg.out_dir / f"profile_eps_{tag}.csv")
    return 5 if partial else 0


SWEEP_COLUMNS = ["c", "norm_minus", "norm_plus"]


def cmd_nonrel(cfg: RunConfig) -> int:
    grid = cfg.grid()
    params = cfg.physics()
    swp = cfg.section("sweep")
    c_list = [float(c) for c in swp.get("c_list", [1.0, 2.0, 4.0, 8.0, 16.0])]
    if len(c_list) < 4:
        raise ConfigError("c_list needs at least 4 entries")
    if any(b <= a for a, b in zip(c_list, c_list[1:])):
        raise ConfigError("c_list must be strictly increasing")
    k = complex(float(swp.get("k_re", 0.0)), float(swp.get("k_im", 1.0)))
    if k.imag == 0:
        raise ConfigError("sweep k must have nonzero imaginary part")
    result = rsl.nonrel_sweep(grid, m=params.m, p=params.p, k=k,
                              c_list=c_list, seed=cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[list] = [[pt.c, pt.norm_minus, pt.norm_plus] for pt in result.points]
    rows.append(["slope", result.slope_minus, result.slope_plus])
    _write_csv(cfg.out_dir / "nonrel_sweep.csv", SWEEP_COLUMNS, rows)
    _write_json(cfg.out_dir / "nonrel_summary.json", {
        "slope_minus": result.slope_minus,
        "slope_plus": result.slope_plus,
        "monotone_decreasing": result.monotone_decreasing(),
        "k_re": k.real, "k_im": k.imag, "m": params.m,
        "c_list": c_list,
    })
    return 0


def _resolvent_test_field(grid: Grid) -> SpinorField:
    """Deterministic smooth decaying spinor, asymmetric across the edges."""
    psi = SpinorField.zeros(grid)
    for e in grid.graph.edges:
        x = grid.x_int(e.id)
        xh = grid.x_half(e.id)
        a = 1.0 + 0.4 * e.id
        psi.set_phi_edge(e.id, a * np.exp(-0.5 * x**2) * (1.0 + 0.2j * x))
        psi.set_chi_edge(e.id, (0.3 + 0.1 * e.id) * xh * np.exp(-0.8 * xh) * (0.5 - 0.3j))
    psi.phi[0] = 1.0  # shared vertex value (last edge write would win otherwise)
    return psi


def cmd_resolvent_check(cfg: RunConfig) -> int:
    grid = cfg.grid()
    params = cfg.physics()
    if params.c != 1.0:
        raise ConfigError("the analytic kernel checks require c = 1")
    rc = cfg.section("resolvent", required=False)
    k = complex(float(rc.get("k_re", 0.0)), float(rc.get("k_im", 1.0)))
    try:
        query = rsl.ResolventQuery(k=k, m=params.m)
    except rsl.DegenerateQueryError as exc:
        raise ConfigError(str(exc)) from exc
    scale = 2.0 if rc.get("corrupt_b2_prefactor", False) else 1.0
    id_rtol = float(rc.get("identity_rtol", 2e-2))
    cross_rtol = float(rc.get("crosscheck_rtol", 1e-3))
    fact_rtol = float(rc.get("factorization_rtol", 1e-6))
    psi = _resolvent_test_field(grid)
    dirac = assemble_dirac(grid.graph, grid, params)

    checks: list[dict] = []

    def add(name: str, value: float, tol: float) -> None:
        checks.append({"name": name, "value": value, "tolerance": tol,
                       "pass": bool(value <= tol)})

    identity = rsl.identity_residual(psi, query, dirac, method="matrix",
                                     b2_prefactor_scale=scale)
    add("kernel_identity_relative_residual", identity, id_rtol)

    applied = rsl.apply_kernel(psi, query, method="matrix", b2_prefactor_scale=scale)
    direct = dirac.shifted_solve_field(k, psi)
    rel = (l2_norm(SpinorField(grid, applied.field.data - direct.data))
           / l2_norm(direct))
    add("kernel_vs_shifted_solve_relative", float(rel), cross_rtol)

    via_alpha = rsl.apply_kernel(psi, query, method="correction")
    via_matrix = rsl.apply_kernel(psi, query, method="matrix")
    consistency = (l2_norm(SpinorField(grid, via_alpha.field.data - via_matrix.field.data))
                   / max(l2_norm(via_alpha.field), 1e-300))
    add("kernel_method_consistency", float(consistency), 1e-8)

    fact = rsl.resdecomp_check(grid, params, k, num_samples=3, seed=cfg.seed)
    add("factorization_minus_renormalization", fact["minus"], fact_rtol)
    add("factorization_plus_renormalization", fact["plus"], fact_rtol)

    all_pass = all(c["pass"] for c in checks)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "resolvent_report.json", {
        "k_re": k.real, "k_im": k.imag,
        "m": params.m, "checks": checks, "all_pass": all_pass,
        "b2_prefactor_scale": scale,
    })
    return 0 if all_pass else 4


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="diracgraph",
                                     description="Nonlinear Dirac equation on metric graphs")
    parser.add_argument("command", choices=["soliton", "evolve", "branch",
                                            "nonrel", "resolvent-check"])
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="rng seed override")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.out, args.seed)
        if args.verbose:
            print(f"config loaded from {args.config}, output to {cfg.out_dir}",
                  file=sys.stderr)
        handler = {
            "soliton": cmd_soliton,
            "evolve": cmd_evolve,
            "branch": cmd_branch,
            "nonrel": cmd_nonrel,
            "resolvent-check": cmd_resolvent_check,
        }[args.command]
        return handler(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, evo.EvolutionError, sw.NonConvergenceError,
            rsl.DegenerateQueryError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
