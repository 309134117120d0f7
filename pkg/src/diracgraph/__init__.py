"""Nonlinear Dirac equation with Kerr nonlinearity on noncompact metric graphs.

Subpackages by concern: graph topology (:mod:`graphs`), staggered fields and
quadrature (:mod:`fields`), sparse Hermitian operators (:mod:`operators`),
Strang time evolution (:mod:`evolution`), soliton-seeded bound-state
continuation (:mod:`standing_waves`), the analytic 3-star resolvent kernel and
nonrelativistic-limit checks (:mod:`resolvent`), and the batch CLI
(:mod:`cli`).
"""
from .fields import (
    Grid,
    GridSpec,
    ScalarField,
    SpinorField,
    l2_norm,
    lp_power_integral,
    vertex_residuals,
    write_snapshot_csv,
)
from .graphs import Edge, MetricGraph, StarSpec, incidence_signs, make_line, make_star
from .operators import (
    HermitianOperator,
    PhysParams,
    assemble_big_laplacian,
    assemble_delta_prime_laplacian,
    assemble_dirac,
    assemble_kirchhoff_laplacian,
)

__all__ = [
    "Edge",
    "Grid",
    "GridSpec",
    "HermitianOperator",
    "MetricGraph",
    "PhysParams",
    "ScalarField",
    "SpinorField",
    "StarSpec",
    "assemble_big_laplacian",
    "assemble_delta_prime_laplacian",
    "assemble_dirac",
    "assemble_kirchhoff_laplacian",
    "incidence_signs",
    "l2_norm",
    "lp_power_integral",
    "make_line",
    "make_star",
    "vertex_residuals",
    "write_snapshot_csv",
]

__version__ = "0.1.0"
