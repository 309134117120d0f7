import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diracgraph.fields import (
    Grid,
    GridError,
    GridSpec,
    ScalarField,
    SpinorField,
    l2_norm,
    lp_power_integral,
    vertex_residuals,
    write_snapshot_csv,
)
from diracgraph.graphs import Edge, MetricGraph, StarSpec, UNBOUNDED, make_star
from diracgraph.standing_waves import SolitonSpec, seed_state, soliton_field


def star_grid(n=3, h=0.05, length=30.0) -> Grid:
    star = make_star(StarSpec(n, length))
    return Grid(GridSpec.uniform(star, h, length))


def single_edge_grid(h, length) -> Grid:
    g = MetricGraph(edges=(Edge(id=0, length=UNBOUNDED, head=0, tail=None),),
                    num_vertices=1)
    return Grid(GridSpec.uniform(g, h, length))


def test_gridspec_rejects_bad_inputs():
    star = make_star(StarSpec(3, 10.0))
    with pytest.raises(GridError):
        GridSpec.uniform(star, -0.1, 10.0)
    with pytest.raises(GridError):
        GridSpec(graph=star, spacing=(1.0, 1.0, 1.0), counts=(2, 2, 2))  # too few cells
    with pytest.raises(GridError):
        GridSpec(graph=star, spacing=(1.0, 1.0), counts=(10, 10, 10))


def test_l2_norm_zero_field():
    grid = star_grid()
    assert l2_norm(SpinorField.zeros(grid)) == 0.0


def test_l2_norm_constant_on_single_edge():
    grid = single_edge_grid(0.05, 10.0)
    psi = SpinorField.zeros(grid)
    psi.set_phi_edge(0, np.ones(grid.m(0) + 1))
    assert l2_norm(psi) == pytest.approx(math.sqrt(10.0), abs=1e-12)


def test_l2_norm_soliton_oracle():
    # N=3, p=4, m=1/2: each half-line contributes the full integral of 2 sech^2,
    # whose antiderivative is 2 tanh, so the squared norm is exactly 6
    grid = star_grid(h=0.05)
    u = soliton_field(SolitonSpec(p=4.0, m=0.5, n_edges=3), grid)
    psi = SpinorField.from_components(grid, u.data, np.zeros(grid.n_chi))
    assert l2_norm(psi) ** 2 == pytest.approx(6.0, abs=1e-10)


def test_l2_norm_second_order_convergence():
    # measurable O(h^2) trapezoid error needs nonvanishing odd derivatives at
    # the ends; sech-type profiles converge exponentially instead
    exact = math.sqrt((1.0 - math.exp(-20.0)) / 2.0)
    errors = []
    for h in (0.2, 0.1, 0.05):
        grid = single_edge_grid(h, 10.0)
        psi = SpinorField.zeros(grid)
        psi.set_phi_edge(0, np.exp(-grid.x_int(0)))
        errors.append(abs(l2_norm(psi) - exact))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.15)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.15)


def test_l2_norm_exponentially_accurate_on_soliton():
    grid = star_grid(h=0.1)
    u = soliton_field(SolitonSpec(p=4.0, m=0.5, n_edges=3), grid)
    psi = SpinorField.from_components(grid, u.data, np.zeros(grid.n_chi))
    assert abs(l2_norm(psi) ** 2 - 6.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3.0, 3.0, allow_nan=False))
def test_norm_triangle_inequality_and_homogeneity(seed, alpha):
    grid = star_grid(n=2, h=0.5, length=4.0)
    rng = np.random.default_rng(seed)
    f = SpinorField(grid, rng.standard_normal(grid.n_spinor)
                    + 1j * rng.standard_normal(grid.n_spinor))
    g = SpinorField(grid, rng.standard_normal(grid.n_spinor)
                    + 1j * rng.standard_normal(grid.n_spinor))
    s = SpinorField(grid, f.data + g.data)
    assert l2_norm(s) <= l2_norm(f) + l2_norm(g) + 1e-12
    scaled = SpinorField(grid, alpha * f.data)
    assert l2_norm(scaled) == pytest.approx(abs(alpha) * l2_norm(f), abs=1e-12)


def test_lp_power_integral_zero_and_validation():
    grid = star_grid(n=2, h=0.5, length=4.0)
    assert lp_power_integral(SpinorField.zeros(grid), 4.0) == 0.0
    with pytest.raises(ValueError):
        lp_power_integral(SpinorField.zeros(grid), 2.0)


def test_lp_power_integral_constant():
    grid = single_edge_grid(0.05, 7.0)
    psi = SpinorField.zeros(grid)
    psi.set_phi_edge(0, np.ones(grid.m(0) + 1))
    assert lp_power_integral(psi, 4.0) == pytest.approx(7.0, abs=1e-12)


def test_lp_power_integral_soliton_oracle():
    # integral of sech^4 over a half-line is 2/3, so 3 * 4 * 2/3 = 8
    grid = star_grid(h=0.05)
    u = soliton_field(SolitonSpec(p=4.0, m=0.5, n_edges=3), grid)
    psi = SpinorField.from_components(grid, u.data, np.zeros(grid.n_chi))
    assert lp_power_integral(psi, 4.0) == pytest.approx(8.0, abs=1e-10)


def test_vertex_continuity_is_structural():
    grid = star_grid(n=4, h=0.2, length=8.0)
    rng = np.random.default_rng(0)
    psi = SpinorField(grid, rng.standard_normal(grid.n_spinor) + 0j)
    res = vertex_residuals(psi)
    assert res[0].continuity_max == 0.0


def test_seed_spinor_kirchhoff_sum_vanishes_with_h():
    # the odd-N seed has phi'(0) = 0, so the signed chi-trace sum is pure
    # discretization error
    sums = []
    for h in (0.1, 0.05):
        grid = star_grid(n=3, h=h)
        seed = seed_state(SolitonSpec(p=4.0, m=0.5, n_edges=3), grid)
        psi = SpinorField.from_components(grid, seed.u.data, -1j * seed.w.data)
        sums.append(abs(vertex_residuals(psi)[0].kirchhoff_sum))
    assert sums[1] < sums[0] / 4.0
    assert sums[1] < 1e-3


@pytest.mark.parametrize("shift", [0.0, 0.7, 1.3])
def test_shifted_family_kirchhoff_sum(shift):
    # the even-N family pairs the traces of phi' at -a and +a, which cancel
    grid = star_grid(n=4, h=0.02, length=30.0)
    seed = seed_state(SolitonSpec(p=4.0, m=0.5, n_edges=4, shift=shift), grid)
    psi = SpinorField.from_components(grid, seed.u.data, -1j * seed.w.data)
    assert abs(vertex_residuals(psi)[0].kirchhoff_sum) < 5e-4


def test_snapshot_csv_roundtrip(tmp_path):
    grid = star_grid(n=2, h=0.5, length=4.0)
    psi = SpinorField.zeros(grid)
    psi.set_phi_edge(0, np.linspace(0, 1, grid.m(0) + 1) * (1 + 2j))
    psi.set_chi_edge(1, np.linspace(1, 2, grid.m(1)) * 1j)
    path = tmp_path / "snap.csv"
    write_snapshot_csv(psi, path)
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert set(rows[0]) == {"edge_id", "node_kind", "x", "re_phi", "im_phi",
                            "re_chi", "im_chi"}
    int_rows = [r for r in rows if r["node_kind"] == "int" and r["edge_id"] == "0"]
    assert len(int_rows) == grid.m(0) + 1
    assert float(int_rows[-1]["im_phi"]) == pytest.approx(2.0)
    half_rows = [r for r in rows if r["node_kind"] == "half" and r["edge_id"] == "1"]
    assert float(half_rows[0]["re_chi"]) == 0.0


def test_scalar_field_families():
    grid = star_grid(n=2, h=0.5, length=4.0)
    f = ScalarField.zeros(grid, family="half")
    assert f.data.shape == (grid.n_chi,)
    with pytest.raises(GridError):
        ScalarField(grid, np.zeros(3), family="integer")
    with pytest.raises(GridError):
        SpinorField(grid, np.full(grid.n_spinor, np.nan, dtype=complex))
