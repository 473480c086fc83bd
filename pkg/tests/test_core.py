"""Core grid, operator, and elliptic-solver tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from debyeflow import BoundaryData, ChannelGrid, Params, VelocityField
from debyeflow.elliptic import (
    harmonic_extension,
    project_div_free,
    solve_div_form,
    solve_poisson,
    solve_shifted_poisson,
)
from debyeflow.operators import (
    BandedMatrix,
    d2dy2,
    ddy,
    div_a_grad,
    divergence,
    grad,
    integrate,
    laplacian,
    norm_l2,
    norms,
    quad_weights,
)

from oracles import dense_dirichlet_poisson, interior_laplacian_action

RNG = np.random.default_rng(20240817)


def grid1d(ny=65):
    return ChannelGrid(d=1, nx=1, ny=ny)


def grid2d(nx=16, ny=17):
    return ChannelGrid(d=2, nx=nx, ny=ny)


# ---------------------------------------------------------------------------
# types


def test_params_invariants():
    p = Params(z1=2.0, z2=-1.0, D1=3.0, D2=1.0, nu=0.5, eps=0.1)
    assert p.D_star == 1.0
    with pytest.raises(ValueError):
        Params(z1=-1.0, z2=-1.0, D1=1.0, D2=1.0, nu=1.0, eps=0.1)
    with pytest.raises(ValueError):
        Params(z1=1.0, z2=-1.0, D1=1.0, D2=2.0, nu=1.0, eps=0.1)
    with pytest.raises(ValueError):
        Params(z1=1.0, z2=-1.0, D1=1.0, D2=1.0, nu=1.0, eps=0.0)
    with pytest.raises(ValueError):
        Params(z1=1.0, z2=-1.0, D1=1.0, D2=1.0, nu=1.0, eps=0.1, c_lower=2.0, c_upper=1.0)


def test_boundary_data_electroneutral():
    p = Params(z1=2.0, z2=-1.0, D1=3.0, D2=1.0, nu=1.0, eps=0.1)
    g = grid2d()
    gamma1 = np.vstack([2.0 + 0.1 * np.cos(2 * np.pi * g.x), np.full(g.nx, 1.5)])
    bdata = BoundaryData.electroneutral(gamma1, w=np.zeros((2, g.nx)), params=p)
    defect = bdata.charge_defect(p)
    assert defect == 0.0, f"electroneutral construction should be exact, defect={defect}"
    # gamma2 = -z1 gamma1 / z2 = 2 gamma1 here
    assert np.allclose(bdata.gamma2, 2.0 * gamma1)
    with pytest.raises(ValueError):
        BoundaryData(gamma1=-gamma1, gamma2=gamma1, w=np.zeros((2, g.nx)))


def test_grid_validation():
    with pytest.raises(ValueError):
        ChannelGrid(d=1, nx=4, ny=33)
    with pytest.raises(ValueError):
        ChannelGrid(d=2, nx=12, ny=33)
    with pytest.raises(ValueError):
        ChannelGrid(d=2, nx=16, ny=4)
    g = grid1d(33)
    assert np.isclose(g.hy, 1.0 / 32.0)
    assert g.y[0] == 0.0 and g.y[-1] == 1.0


# ---------------------------------------------------------------------------
# derivatives


def test_ddy_exact_on_quadratics():
    g = grid1d(21)
    y = g.yy
    f = 3.0 * y ** 2 - 2.0 * y + 1.0
    df = ddy(g, f)
    expected = 6.0 * y - 2.0
    assert np.allclose(df, expected, atol=1e-12), (
        f"one-sided and centred stencils must be exact on quadratics, "
        f"max err {np.max(np.abs(df - expected)):.2e}"
    )


def test_d2dy2_exact_on_cubics():
    g = grid1d(21)
    y = g.yy
    f = y ** 3 - y ** 2
    d2f = d2dy2(g, f)
    assert np.allclose(d2f, 6.0 * y - 2.0, atol=1e-10)


def test_spectral_x_derivatives():
    g = grid2d(nx=32, ny=17)
    f = np.sin(2 * np.pi * 3 * g.xx) * (1.0 + g.yy)
    lap = laplacian(g, f)
    # pure-x mode: spectral part exact, y part exact on linear factor
    expected = -(2 * np.pi * 3) ** 2 * f
    assert np.allclose(lap, expected, atol=1e-9), f"max err {np.max(np.abs(lap - expected)):.2e}"


def test_translation_invariance_in_x():
    g = grid2d(nx=16, ny=17)
    f = RNG.standard_normal(g.shape)
    for op in (laplacian, lambda gr, a: grad(gr, a)[0], lambda gr, a: grad(gr, a)[1]):
        shifted_then_op = op(g, np.roll(f, 1, axis=0))
        op_then_shifted = np.roll(op(g, f), 1, axis=0)
        assert np.allclose(shifted_then_op, op_then_shifted, atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_laplacian_negative_on_dirichlet_fields(seed):
    # <Lap f, f> <= 0 for fields vanishing at the walls (trapezoid pairing)
    rng = np.random.default_rng(seed)
    g = grid2d(nx=8, ny=12)
    f = rng.standard_normal(g.shape)
    f[:, 0] = 0.0
    f[:, -1] = 0.0
    inner = np.zeros_like(f)
    inner[:, 1:-1] = interior_laplacian_action(g, f)
    val = integrate(g, inner * f)
    assert val <= 1e-12, f"discrete Laplacian must be negative semi-definite, got <Lf,f>={val:.3e}"


# ---------------------------------------------------------------------------
# quadrature and norms


def test_quad_weights_measure():
    for g in (grid1d(17), grid2d(8, 21)):
        total = float(np.sum(quad_weights(g)))
        assert np.isclose(total, 1.0, atol=1e-14), f"weights must sum to |domain|=1, got {total}"


def test_l2_of_sine_profile():
    # trapezoid integrates sin^2(pi y) exactly at machine precision for
    # every uniform grid, since the cos(2 pi y) remainder aliases to zero
    for ny in (9, 33, 129, 1025):
        g = grid1d(ny)
        val = norm_l2(g, np.sin(np.pi * g.yy))
        assert np.isclose(val, 1.0 / np.sqrt(2.0), atol=1e-13), f"ny={ny}: l2={val!r}"


def test_norms_zero_field():
    g = grid2d()
    n = norms(g, g.zeros())
    assert all(v == 0.0 for v in n.values()), f"zero field must have zero norms, got {n}"


def test_norms_velocity_field():
    g = grid2d(8, 17)
    u = VelocityField(g, [np.full(g.shape, 3.0), np.full(g.shape, 4.0)])
    n = norms(g, u)
    assert np.isclose(n["l2"], 5.0, atol=1e-12)
    assert n["linf"] == 4.0


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    g = grid1d(17)
    f = rng.standard_normal(g.shape)
    h = rng.standard_normal(g.shape)
    lhs = norm_l2(g, f + h)
    rhs = norm_l2(g, f) + norm_l2(g, h)
    assert lhs <= rhs + 1e-12, f"triangle inequality violated: {lhs} > {rhs}"


# ---------------------------------------------------------------------------
# harmonic extension


def test_harmonic_extension_constant():
    g = grid2d()
    f = harmonic_extension(g, 1.0)
    assert np.allclose(f, 1.0, atol=1e-13)


def test_harmonic_extension_linear():
    g = grid1d(33)
    f = harmonic_extension(g, np.array([0.0, 1.0]))
    assert np.allclose(f, g.yy, atol=1e-12), "x-independent data must extend linearly"


def test_harmonic_extension_against_dense_solve():
    g = grid2d(nx=8, ny=10)
    bc0 = np.cos(2 * np.pi * g.x)
    bc1 = np.zeros(g.nx)
    f = harmonic_extension(g, np.vstack([bc0, bc1]))
    ref = dense_dirichlet_poisson(g, g.zeros(), bc0, bc1)
    err = np.max(np.abs(f - ref))
    assert err <= 1e-12, f"per-mode and dense routes disagree by {err:.2e}"


def test_harmonic_extension_electroneutral_linearity():
    p = Params(z1=2.0, z2=-1.0, D1=2.0, D2=1.0, nu=1.0, eps=0.1)
    g = grid2d(nx=16, ny=21)
    gamma1 = np.vstack([2.0 + 0.3 * np.sin(2 * np.pi * g.x), 1.0 + 0.1 * np.cos(2 * np.pi * g.x)])
    bdata = BoundaryData.electroneutral(gamma1, w=np.zeros((2, g.nx)), params=p)
    big_gamma1 = harmonic_extension(g, bdata.gamma1)
    big_gamma2 = harmonic_extension(g, bdata.gamma2)
    defect = np.max(np.abs(p.z1 * big_gamma1 + p.z2 * big_gamma2))
    assert defect <= 1e-12, f"extension must preserve zero net charge, defect={defect:.2e}"


# ---------------------------------------------------------------------------
# poisson solver


def test_poisson_homogeneous():
    g = grid2d()
    f = solve_poisson(g, g.zeros())
    assert np.allclose(f, 0.0, atol=1e-14)


def test_poisson_eigenfunction_and_dense_oracle():
    g = grid2d(nx=8, ny=10)
    rhs = np.sin(2 * np.pi * g.xx) * np.sin(np.pi * g.yy)
    f = solve_poisson(g, rhs)
    ref = dense_dirichlet_poisson(g, rhs, np.zeros(g.nx), np.zeros(g.nx))
    err = np.max(np.abs(f - ref))
    assert err <= 1e-12, f"banded vs dense route mismatch {err:.2e}"
    # continuum eigenfunction check, second order in hy
    exact = rhs / (4 * np.pi ** 2 + np.pi ** 2)
    assert np.max(np.abs(f - exact)) < 0.5 * g.hy ** 2 * np.pi ** 2 * np.max(np.abs(exact)) + 1e-4


def test_poisson_second_order_convergence():
    errs = []
    for ny in (17, 33, 65, 129):
        g = grid1d(ny)
        rhs = np.pi ** 2 * np.sin(np.pi * g.yy)
        f = solve_poisson(g, rhs)
        errs.append(np.max(np.abs(f - np.sin(np.pi * g.yy))))
    rates = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert all(r > 1.9 for r in rates), f"expected second-order convergence, rates={rates}"


def test_poisson_coeff_linearity():
    g = grid1d(33)
    rhs = np.sin(np.pi * g.yy)
    eps = 2.0 ** -5
    f1 = solve_poisson(g, rhs, coeff=1.0)
    feps = solve_poisson(g, rhs, coeff=eps ** 2)
    assert np.allclose(feps, f1 / eps ** 2, rtol=1e-13), "coeff scaling must be exact linearity"
    with pytest.raises(ValueError):
        solve_poisson(g, rhs, coeff=0.0)


def test_poisson_inverts_laplacian():
    # solve(-Lap f) returns f for homogeneous-Dirichlet fields
    g = grid2d(nx=8, ny=12)
    f = RNG.standard_normal(g.shape)
    f[:, 0] = 0.0
    f[:, -1] = 0.0
    rhs = g.zeros()
    rhs[:, 1:-1] = -interior_laplacian_action(g, f)
    back = solve_poisson(g, rhs)
    err = np.max(np.abs(back - f))
    assert err <= 1e-10, f"solve o (-Lap) must be identity, err={err:.2e}"


def test_shifted_poisson_rejects_negative_shift():
    g = grid1d(17)
    with pytest.raises(ValueError):
        solve_shifted_poisson(g, -1.0, g.zeros())


# ---------------------------------------------------------------------------
# variable-coefficient divergence form


def test_div_form_constant_coeff_matches_poisson():
    g = grid1d(65)
    rhs = -np.pi ** 2 * np.sin(np.pi * g.yy)
    u = solve_div_form(g, np.ones(g.shape), rhs)
    ref = solve_poisson(g, -rhs)
    assert np.allclose(u, ref, atol=1e-11)


def test_div_form_discrete_residual():
    for g in (grid1d(41), grid2d(8, 17)):
        a = 1.5 + 0.5 * np.sin(np.pi * g.yy) + (0.2 * np.cos(2 * np.pi * g.xx) if g.d == 2 else 0.0)
        rhs = np.cos(np.pi * g.yy) * (1.0 + (0.3 * np.sin(2 * np.pi * g.xx) if g.d == 2 else 0.0))
        u = solve_div_form(g, a, rhs, bc=np.array([0.5, -0.25]))
        res = div_a_grad(g, a, u) - rhs
        err = np.max(np.abs(res[:, 1:-1]))
        assert err <= 1e-10, f"d={g.d}: interior residual {err:.2e} exceeds direct-solve budget"
        assert np.allclose(u[:, 0], 0.5) and np.allclose(u[:, -1], -0.25)


def test_div_form_mms_quadratic():
    # manufactured u = y(1-y), a = 1+y: div(a u') = d/dy[(1+y)(1-2y)] = -1 - 4y;
    # the half-node scheme is nodally exact on this pair (quadratic flux)
    g = grid1d(81)
    y = g.yy
    a = 1.0 + y
    rhs = -1.0 - 4.0 * y
    u = solve_div_form(g, a, rhs)
    exact = y * (1.0 - y)
    err = np.max(np.abs(u - exact))
    assert err <= 1e-12, f"quadratic MMS error {err:.2e}"


def test_div_form_rejects_degenerate_coeff():
    g = grid1d(17)
    with pytest.raises(ValueError):
        solve_div_form(g, np.zeros(g.shape), g.zeros())


# ---------------------------------------------------------------------------
# divergence-free projection


def _random_noslip_velocity(g, rng):
    comps = []
    for _ in range(g.d):
        c = rng.standard_normal(g.shape)
        c[:, 0] = 0.0
        c[:, -1] = 0.0
        comps.append(c)
    return VelocityField(g, comps)


def test_projection_divergence_and_energy():
    g = grid2d(nx=16, ny=21)
    u = _random_noslip_velocity(g, RNG)
    pu = project_div_free(g, u)
    div = divergence(g, pu)
    # the discrete constraint lives on interior nodes; walls are pinned
    err = np.max(np.abs(div[:, 1:-1]))
    assert err <= 1e-10, f"projected divergence {err:.2e}"
    e_in = norms(g, u)["l2"]
    e_out = norms(g, pu)["l2"]
    assert e_out <= e_in + 1e-12, f"projection must not increase energy: {e_out} > {e_in}"


def test_projection_idempotent():
    g = grid2d(nx=8, ny=20)
    u = _random_noslip_velocity(g, RNG)
    pu = project_div_free(g, u)
    ppu = project_div_free(g, pu)
    err = max(np.max(np.abs(a - b)) for a, b in zip(pu.components, ppu.components))
    assert err <= 1e-10, f"projection not idempotent, drift {err:.2e}"


def test_projection_removes_discrete_gradient():
    g = grid2d(nx=16, ny=21)
    q = np.cos(2 * np.pi * g.xx) * np.sin(np.pi * g.yy) ** 2
    # build the gradient with the projector's own interior stencils
    qh = np.fft.rfft(q, axis=0)
    ux_h = 1j * g.kx_first[:, None] * qh
    ux = np.fft.irfft(ux_h, n=g.nx, axis=0)
    uy = np.zeros_like(q)
    uy[:, 1:-1] = (q[:, 2:] - q[:, :-2]) / (2 * g.hy)
    ux[:, 0] = ux[:, -1] = 0.0
    u = VelocityField(g, [ux, uy])
    pu = project_div_free(g, u)
    err = max(np.max(np.abs(c)) for c in pu.components)
    assert err <= 1e-9, f"pure interior gradient should project to zero, got {err:.2e}"


def test_projection_d1_is_zero():
    g = grid1d(33)
    w = np.sin(np.pi * g.yy)
    pu = project_div_free(g, VelocityField(g, [w]))
    assert np.all(pu.components[0] == 0.0), "d=1 no-slip divergence-free velocity is zero"


# ---------------------------------------------------------------------------
# banded helper


def test_banded_matrix_roundtrip():
    n = 12
    diags = {
        0: RNG.standard_normal(n) + 5.0,
        1: RNG.standard_normal(n - 1),
        -1: RNG.standard_normal(n - 1),
        2: RNG.standard_normal(n - 2),
    }
    B = BandedMatrix(n, diags)
    x = RNG.standard_normal(n)
    y = B.matvec(x)
    dense = B.to_sparse().toarray()
    assert np.allclose(dense @ x, y, atol=1e-12)
    back = B.solve(y)
    assert np.allclose(back, x, atol=1e-9), f"solve(matvec(x)) != x, err={np.max(np.abs(back - x)):.2e}"
