"""Integrator tests: exact discrete fixed points, amplification factors,
charge relaxation, self-convergence, and guard behavior."""

import numpy as np
import pytest

from debyeflow import BoundaryData, ChannelGrid, Params, State, VelocityField
from debyeflow.npns import (
    MaxPrincipleViolation,
    NpnsConfig,
    StepError,
    run_npns,
    step_npns,
    well_prepared_init,
)
from debyeflow.operators import divergence, norm_l2

from oracles import interior_laplacian_action


def make_cfg(
    ny=33,
    eps=0.25,
    dt=1e-3,
    t_end=None,
    z1=1.0,
    z2=-1.0,
    D1=1.0,
    D2=1.0,
    nu=1.0,
    gamma1=2.0,
    w=(0.0, 0.0),
    d=1,
    nx=1,
    stiff_mode="implicit-coupled",
):
    if t_end is None:
        t_end = dt
    p = Params(z1=z1, z2=z2, D1=D1, D2=D2, nu=nu, eps=eps, c_lower=gamma1, c_upper=gamma1)
    grid = ChannelGrid(d=d, nx=nx, ny=ny)
    gam = np.full((2, nx), gamma1)
    wtr = np.vstack([np.full(nx, w[0]), np.full(nx, w[1])])
    bdata = BoundaryData.electroneutral(gam, w=wtr, params=p)
    return NpnsConfig(params=p, bdata=bdata, grid=grid, dt=dt, t_end=t_end, stiff_mode=stiff_mode)


def discrete_mu2(k, ny):
    # dirichlet eigenvalue of the centred second difference for sin(k pi y)
    h = 1.0 / (ny - 1)
    return (2.0 - 2.0 * np.cos(k * np.pi * h)) / h ** 2


# ---------------------------------------------------------------------------
# initialization


def test_well_prepared_symmetric():
    cfg = make_cfg()
    c1 = np.full(cfg.grid.shape, 2.0)
    s = well_prepared_init(cfg.grid, c1, VelocityField.zero(cfg.grid), cfg)
    assert np.array_equal(s.c2, c1), "z2=-z1 forces c2 = c1"
    rho = s.rho(cfg.params)
    assert np.all(rho == 0.0), "charge must vanish bitwise"
    assert np.all(s.psi == 0.0)


def test_well_prepared_asymmetric_valences():
    cfg = make_cfg(z1=2.0, z2=-1.0, gamma1=1.5)
    c1 = np.full(cfg.grid.shape, 1.5)
    s = well_prepared_init(cfg.grid, c1, VelocityField.zero(cfg.grid), cfg)
    assert np.allclose(s.c2, 3.0), f"c2 = -z1 c1/z2 should be 3.0, got {s.c2[0, 0]}"


def test_well_prepared_rejects_bad_input():
    cfg = make_cfg()
    g = cfg.grid
    with pytest.raises(ValueError, match="trace"):
        well_prepared_init(g, np.full(g.shape, 2.5), VelocityField.zero(g), cfg)
    with pytest.raises(ValueError, match="positive"):
        well_prepared_init(g, -np.ones(g.shape), VelocityField.zero(g), cfg)


# ---------------------------------------------------------------------------
# exact step behavior


def test_equilibrium_is_exact_fixed_point():
    for mode in ("implicit-coupled", "implicit-diffusion-only"):
        cfg = make_cfg(dt=2.0 ** -7, t_end=2.0 ** -7, stiff_mode=mode)
        s0 = well_prepared_init(cfg.grid, np.full(cfg.grid.shape, 2.0), VelocityField.zero(cfg.grid), cfg)
        s1 = step_npns(s0, cfg)
        assert np.array_equal(s1.c1, s0.c1), f"{mode}: equilibrium c1 drifted"
        assert np.array_equal(s1.c2, s0.c2), f"{mode}: equilibrium c2 drifted"
        assert np.array_equal(s1.psi, s0.psi), f"{mode}: equilibrium psi drifted"


def test_pure_diffusion_amplification_exact():
    # neutral eigenmode perturbation with D1 = D2 never creates charge,
    # so each species sees exactly one implicit diffusion step
    ny, dt, D, k = 33, 2e-3, 1.0, 2
    delta = 1e-3
    cfg = make_cfg(ny=ny, dt=dt, D1=D, D2=D)
    g = cfg.grid
    pert = delta * np.sin(k * np.pi * g.yy)
    s0 = well_prepared_init(g, 2.0 + pert, VelocityField.zero(g), cfg)
    s1 = step_npns(s0, cfg)
    factor = 1.0 / (1.0 + dt * D * discrete_mu2(k, ny))
    for c in (s1.c1, s1.c2):
        err = np.max(np.abs((c - 2.0) - factor * pert))
        assert err <= delta * 1e-10, f"amplification factor off by {err / delta:.2e} (relative)"
    rho = s1.rho(cfg.params)
    assert np.max(np.abs(rho)) <= 1e-14, "neutral data must stay neutral"


def test_charge_relaxation_rate():
    # charged sine perturbation on a constant background: rho follows the
    # scalar recursion with the discrete eigenvalue and the background
    # conductivity z1(z1-z2)*D*cbar, up to the size of the perturbation
    ny, dt, eps, D, cbar = 33, 1e-4, 0.1, 1.0, 2.0
    delta = 1e-6
    cfg = make_cfg(ny=ny, dt=dt, eps=eps, D1=D, D2=D, gamma1=cbar, t_end=3 * dt)
    g = cfg.grid
    p = cfg.params
    rho0 = delta * np.sin(np.pi * g.yy)
    c1 = cbar + rho0 / p.z1
    c2 = np.full(g.shape, cbar)
    from debyeflow.elliptic import solve_poisson

    s = State(t=0.0, c1=c1, c2=c2, u=VelocityField.zero(g), psi=solve_poisson(g, rho0, coeff=eps ** 2))
    abar = p.z1 * (p.z1 - p.z2) * cbar
    factor = 1.0 / (1.0 + dt * D * (discrete_mu2(1, ny) + abar / eps ** 2))
    for n in range(1, 4):
        s = step_npns(s, cfg)
        rho = s.rho(p)
        expected = factor ** n * rho0
        err = np.max(np.abs(rho - expected)) / delta
        assert err <= 1e-5, f"step {n}: charge relaxation factor off by {err:.2e} (relative)"


def test_psi_charge_relation_invariant():
    cfg = make_cfg(ny=65, dt=5e-4, eps=0.1, w=(0.0, 0.5), t_end=5e-4)
    g = cfg.grid
    c1 = 2.0 + 0.3 * np.sin(np.pi * g.yy)
    s = well_prepared_init(g, c1, VelocityField.zero(g), cfg)
    for _ in range(3):
        s = step_npns(s, cfg)
    rho = s.rho(cfg.params)
    res = -cfg.params.eps ** 2 * interior_laplacian_action(g, s.psi) - rho[:, 1:-1]
    assert np.max(np.abs(res)) <= 1e-10, "stored psi must satisfy the charge relation"
    assert np.all(s.psi[:, 0] == 0.0) and np.all(s.psi[:, -1] == 0.0)


# ---------------------------------------------------------------------------
# runs


def test_run_t_end_zero_returns_initial():
    cfg = make_cfg(t_end=0.0)
    s0 = well_prepared_init(cfg.grid, np.full(cfg.grid.shape, 2.0), VelocityField.zero(cfg.grid), cfg)
    traj = run_npns(s0, cfg)
    assert len(traj) == 1
    assert traj.snapshots[0].t == 0.0


def test_run_equilibrium_all_identical():
    cfg = make_cfg(dt=1e-3, t_end=5e-3)
    s0 = well_prepared_init(cfg.grid, np.full(cfg.grid.shape, 2.0), VelocityField.zero(cfg.grid), cfg)
    traj = run_npns(s0, cfg)
    times = traj.times
    assert np.all(np.diff(times) > 0), "snapshot times must increase"
    for s in traj.snapshots[1:]:
        assert np.array_equal(s.c1, traj.snapshots[0].c1)
        assert np.array_equal(s.c2, traj.snapshots[0].c2)


def test_run_self_convergence_first_order():
    # drift-diffusion splitting is first order; Richardson against dt/4
    def final_c1(dt):
        cfg = make_cfg(ny=65, eps=0.25, dt=dt, t_end=0.02, w=(0.0, 0.5))
        g = cfg.grid
        c1 = 2.0 + 0.5 * np.sin(np.pi * g.yy)
        s0 = well_prepared_init(g, c1, VelocityField.zero(g), cfg)
        return run_npns(s0, cfg, save_every=10 ** 9).snapshots[-1].c1

    g = ChannelGrid(d=1, nx=1, ny=65)
    ref = final_c1(2.5e-4)
    e1 = norm_l2(g, final_c1(1e-3) - ref)
    e2 = norm_l2(g, final_c1(5e-4) - ref)
    # first order against a dt/4 reference: e(dt)/e(dt/2) = (3/4)/(1/4) = 3
    ratio = e1 / e2
    assert 2.6 <= ratio <= 3.4, f"expected ratio near 3 for first order, got {ratio:.2f}"


def test_unstable_explicit_mode_warns_and_aborts():
    # dt far beyond the eps^2 scale: the config warns, the run fails
    with pytest.warns(UserWarning, match="stability"):
        cfg = make_cfg(ny=65, eps=0.01, dt=5e-3, t_end=0.5, stiff_mode="implicit-diffusion-only")
    g = cfg.grid
    c1 = 2.0 + 0.5 * np.sin(np.pi * g.yy)
    s0 = well_prepared_init(g, c1, VelocityField.zero(g), cfg)
    # seed charge so the explicit coupling actually kicks
    s0.c2 = s0.c2 * (1.0 - 0.05 * np.sin(np.pi * g.yy))
    with pytest.raises((MaxPrincipleViolation, StepError)):
        run_npns(s0, cfg)


def test_config_validation():
    with pytest.raises(ValueError, match="dt"):
        make_cfg(dt=0.0)
    with pytest.raises(ValueError, match="stiff_mode"):
        make_cfg(stiff_mode="semi-implicit")
    cfg = make_cfg(dt=3e-4, t_end=1e-3)
    with pytest.raises(ValueError, match="whole number"):
        _ = cfg.n_steps


# ---------------------------------------------------------------------------
# two-dimensional smoke


def test_d2_run_invariants():
    p = Params(z1=1.0, z2=-1.0, D1=2.0, D2=1.0, nu=0.5, eps=0.25, c_lower=1.8, c_upper=2.2)
    grid = ChannelGrid(d=2, nx=8, ny=17)
    gamma1 = np.vstack([2.0 + 0.2 * np.cos(2 * np.pi * grid.x), np.full(grid.nx, 2.0)])
    w = np.vstack([0.1 * np.sin(2 * np.pi * grid.x), np.zeros(grid.nx)])
    bdata = BoundaryData.electroneutral(gamma1, w=w, params=p)
    cfg = NpnsConfig(params=p, bdata=bdata, grid=grid, dt=1e-3, t_end=5e-3)
    c1 = np.tile(gamma1[0][:, None], (1, grid.ny)) * (1.0 - grid.yy) + 2.0 * grid.yy
    s0 = well_prepared_init(grid, c1, VelocityField.zero(grid), cfg)
    traj = run_npns(s0, cfg)
    s = traj.snapshots[-1]
    assert np.all(np.isfinite(s.c1)) and np.all(np.isfinite(s.c2))
    # wall conditions exact
    assert np.array_equal(s.c1[:, 0], gamma1[0])
    assert np.all(s.u.components[0][:, 0] == 0.0)
    # projection keeps interior divergence at solver tolerance
    div = divergence(grid, s.u)
    assert np.max(np.abs(div[:, 1:-1])) <= 1e-10
    # charge relation after recompute
    res = -p.eps ** 2 * interior_laplacian_action(grid, s.psi) - s.rho(p)[:, 1:-1]
    assert np.max(np.abs(res)) <= 1e-10
