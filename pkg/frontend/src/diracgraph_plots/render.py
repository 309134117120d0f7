"""Figure rendering from solver CSV artifacts.

Each kind reads one documented CSV schema and writes one image file; inputs
are never modified and identical inputs yield identical image bytes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .schemas import (
    BRANCH_REQUIRED,
    PROFILE_REQUIRED,
    SWEEP_REQUIRED,
    TIMESERIES_REQUIRED,
    SchemaError,
    Table,
    read_table,
)

KINDS = ("timeseries", "branch", "profile", "loglog")


@dataclass
class FigureRequest:
    input_path: str
    kind: str
    output_path: str
    log_y: bool = False
    title: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")


@dataclass
class RenderResult:
    output_path: str
    annotations: dict = field(default_factory=dict)


def _new_figure(title: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    if title:
        ax.set_title(title)
    return fig, ax


def _save(fig, path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # strip the version-dependent metadata chunk so identical inputs give
    # identical bytes
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _render_timeseries(table: Table, req: FigureRequest) -> dict:
    fig, ax = _new_figure(req.title or "conservation diagnostics")
    ax.set_xlabel("t")
    annotations: dict = {}
    t = table.floats("t")
    if t:
        mass = table.floats("mass")
        energy = table.floats("energy")
        mass0, energy0 = mass[0], energy[0]
        mass_drift = [abs(m - mass0) / mass0 if mass0 else 0.0 for m in mass]
        energy_drift = [abs(e - energy0) for e in energy]
        ax.plot(t, mass_drift, label="relative mass drift")
        ax.plot(t, energy_drift, label="energy drift")
        if "duhamel_residual" in table.columns:
            ax.plot(t, table.floats("duhamel_residual"), label="duhamel residual")
        ax.set_yscale("log" if req.log_y else "linear")
        if req.log_y:
            ax.set_ylim(bottom=1e-18)
        annotations["max_mass_drift"] = max(mass_drift)
        ax.legend(loc="best")
    ax.set_ylabel("drift")
    _save(fig, req.output_path)
    return annotations


def _render_branch(table: Table, req: FigureRequest) -> dict:
    fig, ax = _new_figure(req.title or "bound-state branch")
    ax.set_xlabel("eps")
    eps = table.floats("eps", skip_blank=False)
    if eps:
        ax.plot(eps, table.floats("sup_u", skip_blank=False), "o-",
                label="sup |u| (rescaled)")
        act_eps = [float(r["eps"]) for r in table.rows if r["action"] != ""]
        act = table.floats("action")
        if act:
            ax.plot(act_eps, act, "s-", label="action")
        ax.legend(loc="upper left")
        twin = ax.twinx()
        twin.semilogy(eps, table.floats("residual_norm", skip_blank=False),
                      "k:", label="residual")
        twin.set_ylabel("residual (log)")
    ax.set_ylabel("amplitude / action")
    _save(fig, req.output_path)
    return {}


def _render_profile(table: Table, req: FigureRequest) -> dict:
    fig, ax = _new_figure(req.title or "field profile")
    ax.set_xlabel("x")
    ax.set_ylabel("|component|")
    by_edge: dict[str, dict[str, list]] = {}
    for row in table.rows:
        store = by_edge.setdefault(row["edge_id"], {"xi": [], "pi": [], "xh": [], "ch": []})
        if row["node_kind"] == "int" and row["re_phi"] != "":
            store["xi"].append(float(row["x"]))
            store["pi"].append(abs(complex(float(row["re_phi"]), float(row["im_phi"]))))
        elif row["node_kind"] == "half" and row["re_chi"] != "":
            store["xh"].append(float(row["x"]))
            store["ch"].append(abs(complex(float(row["re_chi"]), float(row["im_chi"]))))
    for edge, store in sorted(by_edge.items()):
        if store["xi"]:
            ax.plot(store["xi"], store["pi"], label=f"|phi| edge {edge}")
        if store["xh"]:
            ax.plot(store["xh"], store["ch"], "--", label=f"|chi| edge {edge}")
    if by_edge:
        if req.log_y:
            ax.set_yscale("log")
        ax.legend(loc="best", fontsize=8)
    _save(fig, req.output_path)
    return {}


def _render_loglog(table: Table, req: FigureRequest) -> dict:
    fig, ax = _new_figure(req.title or "nonrelativistic limit decay")
    ax.set_xlabel("c")
    ax.set_ylabel("operator-norm distance")
    annotations: dict = {}
    numeric = [r for r in table.rows if r["c"] not in ("", "slope")]
    slope_rows = [r for r in table.rows if r["c"] == "slope"]
    if numeric:
        cs = [float(r["c"]) for r in numeric]
        ax.loglog(cs, [float(r["norm_minus"]) for r in numeric], "o-",
                  label="minus renormalization")
        ax.loglog(cs, [float(r["norm_plus"]) for r in numeric], "s-",
                  label="plus renormalization")
        ax.legend(loc="best")
    if slope_rows:
        slope_minus = float(slope_rows[0]["norm_minus"])
        slope_plus = float(slope_rows[0]["norm_plus"])
        annotations["slope_minus"] = slope_minus
        annotations["slope_plus"] = slope_plus
        ax.text(0.05, 0.08,
                f"slopes: {slope_minus!r}, {slope_plus!r}",
                transform=ax.transAxes, fontsize=8)
    _save(fig, req.output_path)
    return annotations


_RENDERERS = {
    "timeseries": (_render_timeseries, TIMESERIES_REQUIRED),
    "branch": (_render_branch, BRANCH_REQUIRED),
    "profile": (_render_profile, PROFILE_REQUIRED),
    "loglog": (_render_loglog, SWEEP_REQUIRED),
}


def render(request: FigureRequest) -> RenderResult:
    """Render one figure; raises SchemaError on malformed input."""
    renderer, required = _RENDERERS[request.kind]
    table = read_table(request.input_path, required)
    annotations = renderer(table, request)
    return RenderResult(output_path=request.output_path, annotations=annotations)
