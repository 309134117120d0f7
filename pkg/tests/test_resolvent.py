import math

import numpy as np
import pytest

from diracgraph.fields import Grid, GridSpec, SpinorField, l2_norm, vertex_residuals
from diracgraph.graphs import StarSpec, make_star
from diracgraph.operators import PhysParams, assemble_dirac
from diracgraph.resolvent import (
    DegenerateQueryError,
    ResolventQuery,
    apply_kernel,
    correction_coefficients,
    identity_residual,
    lambda_of_k,
    line_green,
    nonrel_sweep,
    propagator_limit_gap,
    resdecomp_check,
    star3_kernel,
)


def star3(h=0.1, length=15.0):
    star = make_star(StarSpec(3, length))
    return Grid(GridSpec.uniform(star, h, length))


def smooth_field(grid, symmetric=False):
    psi = SpinorField.zeros(grid)
    for e in grid.graph.edges:
        x = grid.x_int(e.id)
        xh = grid.x_half(e.id)
        a = 1.0 if symmetric else 1.0 + 0.4 * e.id
        b = 0.3 if symmetric else 0.3 + 0.1 * e.id
        psi.set_phi_edge(e.id, a * np.exp(-0.5 * x**2) * (1.0 + 0.2j * x))
        psi.set_chi_edge(e.id, b * xh * np.exp(-0.8 * xh) * (0.5 - 0.3j))
    psi.phi[0] = 1.0
    return psi


# -- lambda and the line kernel --------------------------------------------------


def test_lambda_of_k_oracles():
    assert lambda_of_k(1j, 1.0) == pytest.approx(1j * math.sqrt(2.0))
    assert lambda_of_k(0.0, 1.0) == pytest.approx(1j)
    assert lambda_of_k(2j, 0.0) == pytest.approx(2j)  # massless


def test_lambda_of_k_in_gap_and_branch_points():
    lam = lambda_of_k(0.5, 1.0)  # real k inside the spectral gap is admissible
    assert lam.imag > 0
    assert abs(lam**2 + 1.0 - 0.25) < 1e-12
    for k in (1.0, -1.0):
        with pytest.raises(DegenerateQueryError):
            lambda_of_k(k, 1.0)


def test_lambda_roundtrip_property():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = complex(rng.uniform(-3, 3), rng.uniform(0.1, 3))
        m = rng.uniform(0.1, 2.0)
        lam = lambda_of_k(k, m)
        assert lam.imag > 0
        assert abs(k**2 - m**2 - lam**2) < 1e-12 * max(1.0, abs(k) ** 2)


def test_line_green_diagonal_value():
    q = ResolventQuery(k=1j, m=1.0)
    block = line_green(2.0, 2.0, q)
    pref = 0.5j / q.lam
    assert block[0, 0] == pytest.approx(pref * (1.0 + 1j))
    assert block[1, 1] == pytest.approx(pref * (-1.0 + 1j))
    assert block[0, 1] == 0.0  # sign(0) = 0 convention


def test_line_green_sign_antisymmetry_and_decay():
    q = ResolventQuery(k=0.5 + 1j, m=1.0)
    b1 = line_green(1.0, 3.0, q)
    b2 = line_green(3.0, 1.0, q)
    assert b1[0, 1] == pytest.approx(-b2[0, 1])
    assert b1[0, 0] == pytest.approx(b2[0, 0])
    far = line_green(0.0, 40.0, q)
    assert np.max(np.abs(far)) < 1e-12


# -- the 3-star kernel -------------------------------------------------------------


def test_kernel_correction_decays():
    q = ResolventQuery(k=1j, m=1.0)
    block_near = star3_kernel(0.5, 0, 0.7, 1, q)
    block_far = star3_kernel(20.0, 0, 20.0, 1, q)
    assert np.max(np.abs(block_near)) > 1e-3
    assert np.max(np.abs(block_far)) < 1e-12


def test_kernel_far_field_diagonal_is_line_green():
    q = ResolventQuery(k=1j, m=1.0)
    x = y = 15.0
    block = star3_kernel(x, 1, y, 1, q)
    free = line_green(x, y, q)
    assert np.max(np.abs(block - free)) < math.exp(-2 * q.lam.imag * 15.0) * 10


def test_kernel_edge_permutation_symmetry():
    q = ResolventQuery(k=0.3 + 0.8j, m=0.7)
    x, y = 0.4, 1.1
    for perm in ((1, 2, 0), (2, 0, 1), (0, 2, 1)):
        for e in range(3):
            for f in range(3):
                a = star3_kernel(x, e, y, f, q)
                b = star3_kernel(x, perm[e], y, perm[f], q)
                assert np.allclose(a, b, atol=1e-14)


def test_kernel_invalid_edge_index():
    q = ResolventQuery(k=1j, m=1.0)
    with pytest.raises(ValueError):
        star3_kernel(0.0, 3, 0.0, 0, q)


def test_correction_coefficients_zero_field():
    grid = star3()
    q = ResolventQuery(k=1j, m=1.0)
    alphas = correction_coefficients(SpinorField.zeros(grid), q)
    assert alphas == (0.0, 0.0, 0.0)


def test_correction_coefficients_symmetric_input():
    # for edge-symmetric data the continuity bracket cancels identically and
    # only the symmetric trace-sum term survives
    grid = star3(h=0.05)
    q = ResolventQuery(k=1j, m=1.0)
    psi = smooth_field(grid, symmetric=True)
    a1, a2, a3 = correction_coefficients(psi, q)
    assert a1 == pytest.approx(a2, rel=1e-12)
    assert a2 == pytest.approx(a3, rel=1e-12)
    from diracgraph.resolvent import _edge_profile_integrals

    pq = _edge_profile_integrals(psi, q)
    sym_term = np.sum(pq[:, 1]) / (3.0 * (q.m - q.k - q.lam))
    assert a1 == pytest.approx(sym_term, rel=1e-12)


def test_apply_kernel_zero_field():
    grid = star3()
    q = ResolventQuery(k=1j, m=1.0)
    out = apply_kernel(SpinorField.zeros(grid), q)
    assert np.all(out.field.data == 0.0)


def test_apply_kernel_methods_agree():
    grid = star3(h=0.1)
    q = ResolventQuery(k=1j, m=1.0)
    psi = smooth_field(grid)
    a = apply_kernel(psi, q, method="correction").field
    b = apply_kernel(psi, q, method="matrix").field
    assert l2_norm(SpinorField(grid, a.data - b.data)) < 1e-12 * l2_norm(a)


def test_apply_kernel_satisfies_vertex_conditions():
    # continuity is enforced exactly at quadrature level by the correction
    # coefficients; the extrapolated-trace chi sum decays at first order
    q = ResolventQuery(k=1j, m=1.0)
    sums = []
    for h in (0.1, 0.05):
        grid = star3(h=h)
        out = apply_kernel(smooth_field(grid), q)
        assert out.vertex_continuity_spread < 1e-12
        sums.append(abs(vertex_residuals(out.field)[0].kirchhoff_sum))
    assert sums[1] < sums[0] / 1.8
    assert sums[1] < 0.05


@pytest.mark.parametrize("k", [1j, 1.0 + 0.5j])  # the latter is m + i/2
def test_apply_kernel_identity_and_crosscheck(k):
    grid = star3(h=0.05, length=20.0)
    q = ResolventQuery(k=k, m=1.0)
    params = PhysParams(m=1.0, c=1.0, p=4.0)
    op = assemble_dirac(grid.graph, grid, params)
    psi = smooth_field(grid)
    assert identity_residual(psi, q, op) < 2e-3
    direct = op.shifted_solve_field(k, psi)
    applied = apply_kernel(psi, q).field
    rel = l2_norm(SpinorField(grid, applied.data - direct.data)) / l2_norm(direct)
    assert rel < 2e-3


def test_apply_kernel_prefactor_corruption_detected():
    grid = star3(h=0.1)
    q = ResolventQuery(k=1j, m=1.0)
    params = PhysParams(m=1.0, c=1.0, p=4.0)
    op = assemble_dirac(grid.graph, grid, params)
    psi = smooth_field(grid)
    good = identity_residual(psi, q, op, method="matrix")
    bad = identity_residual(psi, q, op, method="matrix", b2_prefactor_scale=2.0)
    assert bad > 100 * good


def test_resolvent_query_validation():
    with pytest.raises(DegenerateQueryError):
        ResolventQuery(k=1.0, m=1.0)
    q = ResolventQuery(k=0.2, m=1.0)  # inside the gap
    assert q.lam.imag > 0


# -- factorization and nonrelativistic limit ----------------------------------------


def test_resdecomp_zero_vector():
    grid = star3(h=0.2, length=10.0)
    params = PhysParams(m=1.0, c=1.0, p=4.0)
    op = assemble_dirac(grid.graph, grid, params)
    assert np.all(op.shifted_solve(params.rest_energy + 1j, np.zeros(op.dim)) == 0)


def test_resdecomp_identity_both_signs():
    grid = star3(h=0.1, length=10.0)
    params = PhysParams(m=1.0, c=1.0, p=4.0)
    out = resdecomp_check(grid, params, 1j, num_samples=2, seed=1)
    assert out["minus"] < 1e-6
    assert out["plus"] < 1e-6


def test_resdecomp_rejects_real_k():
    grid = star3(h=0.2, length=10.0)
    params = PhysParams(m=1.0, c=1.0, p=4.0)
    with pytest.raises(DegenerateQueryError):
        resdecomp_check(grid, params, 0.5 + 0j)


def test_nonrel_sweep_slopes_and_monotonicity():
    grid = star3(h=0.1, length=15.0)
    res = nonrel_sweep(grid, m=1.0, p=4.0, k=1j, c_list=[1, 2, 4, 8], seed=0)
    assert res.slope_minus < -0.9
    assert res.slope_plus < -0.9
    assert res.monotone_decreasing()


def test_nonrel_sweep_validation():
    grid = star3(h=0.2, length=10.0)
    with pytest.raises(ValueError):
        nonrel_sweep(grid, 1.0, 4.0, 1j, c_list=[1, 2, 4])
    with pytest.raises(ValueError):
        nonrel_sweep(grid, 1.0, 4.0, 1j, c_list=[1, 2, 2, 4])


def test_second_component_input_is_annihilated_at_rate_c():
    # the limit of the -mc^2 renormalization projects onto first components;
    # applied to second-component data the full resolvent is O(1/c)
    grid = star3(h=0.1, length=15.0)
    m = 1.0
    norms = []
    for c in (1.0, 2.0, 4.0, 8.0):
        params = PhysParams(m=m, c=c, p=4.0)
        op = assemble_dirac(grid.graph, grid, params)
        psi = SpinorField.zeros(grid)
        for e in grid.graph.edges:
            xh = grid.x_half(e.id)
            psi.set_chi_edge(e.id, np.exp(-((xh - 4.0) ** 2)))
        vec = op.field_to_vec(psi)
        out = op.shifted_solve(params.rest_energy + 1j, vec)
        norms.append(np.linalg.norm(out) / np.linalg.norm(vec))
    ratios = [norms[i] / norms[i + 1] for i in range(3)]
    assert all(r > 1.7 for r in ratios)


def test_kernel_sample_dump(tmp_path):
    from diracgraph.resolvent import dump_kernel_samples

    q = ResolventQuery(k=1j, m=1.0)
    path = tmp_path / "kernel.txt"
    samples = [(0.5, 0, 1.0, 1), (2.0, 2, 2.0, 2)]
    dump_kernel_samples(q, samples, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 2
    parts = lines[1].split()
    assert len(parts) == 4 + 8
    block = star3_kernel(2.0, 2, 2.0, 2, q)
    assert float(parts[4]) == pytest.approx(block[0, 0].real)


def test_propagator_limit_gap_decreases():
    grid = star3(h=0.1, length=15.0)
    psi = SpinorField.zeros(grid)
    for e in grid.graph.edges:
        x = grid.x_int(e.id)
        psi.set_phi_edge(e.id, np.exp(-((x - 5.0) ** 2)))
    psi.phi[0] = np.exp(-25.0)
    gaps = [propagator_limit_gap(grid, m=1.0, p=4.0, c=c, psi=psi, t=0.5, dt=0.01)
            for c in (2.0, 4.0, 8.0)]
    assert gaps[0] > gaps[1] > gaps[2]
