"""Time integration of the two-species electrokinetic system.

One step solves, in this order: a coupled implicit system for both
concentrations and the potential (the electro-coupling is the stiff
part, linearized around the concentrations at the previous level), then
the potential is recomputed from the charge so the Poisson relation
never drifts, then the fluid advances by explicit advection, implicit
viscosity, and a divergence-free projection.  Advection and the
wall-data drift are explicit.

Stepping is organized in delta form: we solve for the increment against
the residual of the previous state, so Dirichlet rows carry exact
zeros and exact equilibria are bitwise fixed points.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .diagnostics import DiagnosticsRecord, MaxPrincipleReport, dissipation_identity_residual, free_energy, max_principle_check
from .elliptic import harmonic_extension, project_div_free, solve_poisson, solve_shifted_poisson
from .grid import ChannelGrid, State, VelocityField
from .operators import BandedMatrix, advect, div_a_grad, grad, laplacian
from .params import BoundaryData, Params

logger = logging.getLogger(__name__)

__all__ = [
    "NpnsConfig",
    "Trajectory",
    "StepError",
    "MaxPrincipleViolation",
    "well_prepared_init",
    "step_npns",
    "run_npns",
    "advance_velocity",
]

STIFF_MODES = ("implicit-coupled", "implicit-diffusion-only")


class StepError(RuntimeError):
    """A linear step produced an invalid state (lost positivity or finiteness)."""

    def __init__(self, t: float, message: str, extrema: dict[str, float]):
        super().__init__(f"t={t:.6g}: {message}; extrema={extrema}")
        self.t = t
        self.extrema = extrema


class MaxPrincipleViolation(RuntimeError):
    """Blow-up guard: concentrations left the admissible band."""

    def __init__(self, t: float, report: MaxPrincipleReport):
        super().__init__(
            f"t={t:.6g}: species {report.worst_species} violates the concentration band "
            f"by {report.worst_violation:.3e} at node {report.worst_index}"
        )
        self.t = t
        self.report = report


@dataclass
class NpnsConfig:
    params: Params
    bdata: BoundaryData
    grid: ChannelGrid
    dt: float
    t_end: float
    stiff_mode: str = "implicit-coupled"

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError(f"time step must be positive, got dt={self.dt}")
        if self.t_end < 0.0:
            raise ValueError(f"final time must be nonnegative, got t_end={self.t_end}")
        if 0.0 < self.t_end < self.dt:
            raise ValueError(f"t_end={self.t_end} smaller than one step dt={self.dt}")
        if self.stiff_mode not in STIFF_MODES:
            raise ValueError(f"stiff_mode must be one of {STIFF_MODES}, got {self.stiff_mode!r}")
        if self.bdata.gamma1.shape[1] != self.grid.nx:
            raise ValueError(
                f"boundary traces sampled on {self.bdata.gamma1.shape[1]} nodes, grid has nx={self.grid.nx}"
            )
        p = self.params
        if self.stiff_mode == "implicit-diffusion-only":
            dt_stiff = p.eps ** 2 / (p.z1 ** 2 * p.D1 * p.c_upper)
            if self.dt > dt_stiff:
                warnings.warn(
                    f"explicit electro-coupling with dt={self.dt:.3g} exceeds the stability "
                    f"scale eps^2/(z1^2 D1 Lambda) = {dt_stiff:.3g}; expect instability",
                    stacklevel=2,
                )

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"t_end={self.t_end} is not a whole number of steps of dt={self.dt}")
        return n


@dataclass
class Trajectory:
    snapshots: list[State] = field(default_factory=list)
    diagnostics: DiagnosticsRecord = field(default_factory=DiagnosticsRecord)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)


class _StepWorkspace:
    """Per-run precomputed wall-data fields shared by every step."""

    def __init__(self, cfg: NpnsConfig):
        g = cfg.grid
        self.phiw = harmonic_extension(g, cfg.bdata.w)
        self.gamma1_trace = cfg.bdata.gamma1
        self.gamma2_trace = cfg.bdata.gamma2


def well_prepared_init(
    grid: ChannelGrid,
    c1_0: np.ndarray,
    u_0: VelocityField,
    cfg: NpnsConfig,
) -> State:
    """Build a zero-charge initial state from the first concentration.

    c2 is set to -(z1/z2) c1 so the charge vanishes bitwise, which in
    turn forces the potential to zero.  The velocity is projected.
    """
    p = cfg.params
    c1_0 = np.asarray(c1_0, dtype=float)
    if c1_0.shape != grid.shape:
        raise ValueError(f"initial field shape {c1_0.shape} != grid {grid.shape}")
    if np.any(c1_0 <= 0.0):
        raise ValueError(f"initial concentration must be positive, min={np.min(c1_0)}")
    mismatch = max(
        float(np.max(np.abs(c1_0[:, 0] - cfg.bdata.gamma1[0]))),
        float(np.max(np.abs(c1_0[:, -1] - cfg.bdata.gamma1[1]))),
    )
    if mismatch > 1e-10:
        raise ValueError(f"initial trace differs from wall data by {mismatch:.3e}")
    for comp in u_0.components:
        wall = max(float(np.max(np.abs(comp[:, 0]))), float(np.max(np.abs(comp[:, -1]))))
        if wall > 1e-12:
            raise ValueError(f"initial velocity must vanish on the walls, got {wall:.3e}")
    c2_0 = -(p.z1 / p.z2) * c1_0
    return State(t=0.0, c1=c1_0.copy(), c2=c2_0, u=project_div_free(grid, u_0), psi=grid.zeros())


# ---------------------------------------------------------------------------
# coupled implicit solve, d = 1 (banded) and d = 2 (sparse)


def _coupled_banded_1d(grid: ChannelGrid, p: Params, dt: float, c1n, c2n) -> BandedMatrix:
    """Node-major banded matrix for the (c1, c2, psi) implicit system.

    Unknown layout [c1_j, c2_j, psi_j]; the electro-coupling column uses
    the half-node fluxes of the frozen concentrations, the psi row is
    the charge relation itself, wall rows are identities.
    """
    ny = grid.ny
    n = 3 * ny
    h2 = grid.hy ** 2
    eps2 = p.eps ** 2
    offs = (-3, -2, -1, 0, 1, 2, 3, 4, 5)
    d = {k: np.zeros(n) for k in offs}
    j = np.arange(1, ny - 1)

    for v, (z, D, a) in enumerate(((p.z1, p.D1, c1n[0]), (p.z2, p.D2, c2n[0]))):
        g = 3 * j + v
        ah = 0.5 * (a[:-1] + a[1:])  # ah[j] = a at j+1/2
        lo = ah[j - 1]
        hi = ah[j]
        d[0][g] = 1.0 / dt + 2.0 * D / h2
        d[-3][g] = -D / h2
        d[3][g] = -D / h2
        off = 2 - v
        d[off][g] = z * D * (lo + hi) / h2
        d[off + 3][g] = -z * D * hi / h2
        d[off - 3][g] = -z * D * lo / h2

    gp = 3 * j + 2
    d[0][gp] = 2.0 * eps2 / h2
    d[-3][gp] = -eps2 / h2
    d[3][gp] = -eps2 / h2
    d[-2][gp] = -p.z1
    d[-1][gp] = -p.z2

    for g in (0, 1, 2, n - 3, n - 2, n - 1):
        d[0][g] = 1.0
    return BandedMatrix(n, d)


def _div_a_grad_matrix(grid: ChannelGrid, a: np.ndarray) -> scipy.sparse.csr_matrix:
    """Sparse conservative div(a grad .) over all nodes; wall rows zero.

    With a = 1 this is the standard five-point Laplacian (periodic in
    x), which is exactly the operator the d = 2 coupled solve needs for
    diffusion and for the charge relation.
    """
    nx, ny = grid.shape
    N = nx * ny
    h2 = grid.hy ** 2
    ii, jj = np.meshgrid(np.arange(nx), np.arange(1, ny - 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    row = ii * ny + jj

    a_lo = 0.5 * (a[ii, jj - 1] + a[ii, jj]) / h2
    a_hi = 0.5 * (a[ii, jj] + a[ii, jj + 1]) / h2
    rows = [row, row, row]
    cols = [row, ii * ny + jj - 1, ii * ny + jj + 1]
    vals = [-(a_lo + a_hi), a_lo, a_hi]

    if grid.d == 2:
        hx2 = grid.hx ** 2
        ip = (ii + 1) % nx
        im = (ii - 1) % nx
        a_e = 0.5 * (a[ii, jj] + a[ip, jj]) / hx2
        a_w = 0.5 * (a[im, jj] + a[ii, jj]) / hx2
        vals[0] = vals[0] - (a_e + a_w)
        rows += [row, row]
        cols += [ip * ny + jj, im * ny + jj]
        vals += [a_e, a_w]

    return scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )


def _coupled_sparse_2d(grid: ChannelGrid, p: Params, dt: float, c1n, c2n) -> scipy.sparse.csc_matrix:
    nx, ny = grid.shape
    N = nx * ny
    ones = np.ones(grid.shape)
    lap = _div_a_grad_matrix(grid, ones)

    int_mask = np.ones(grid.shape)
    int_mask[:, 0] = 0.0
    int_mask[:, -1] = 0.0
    I_int = scipy.sparse.diags(int_mask.ravel())
    I_wall = scipy.sparse.diags(1.0 - int_mask.ravel())

    Z = scipy.sparse.csr_matrix((N, N))
    blocks = []
    for z, D, a in ((p.z1, p.D1, c1n), (p.z2, p.D2, c2n)):
        diff = I_int / dt - D * lap + I_wall
        coup = -z * D * _div_a_grad_matrix(grid, a)
        row = [Z, Z, coup]
        row[len(blocks)] = diff
        blocks.append(row)
    pois = -p.eps ** 2 * lap + I_wall
    blocks.append([-p.z1 * I_int, -p.z2 * I_int, pois])
    return scipy.sparse.bmat(blocks, format="csc")


def advance_velocity(
    grid: ChannelGrid,
    u: VelocityField,
    dt: float,
    nu: float,
    force: list[np.ndarray],
) -> VelocityField:
    """Explicit advection + implicit viscosity + projection, no-slip walls.

    In d = 1 the projection annihilates everything, so the velocity is
    returned as exactly zero without any solves.
    """
    if grid.d == 1:
        return VelocityField.zero(grid)
    alpha = 1.0 / (dt * nu)
    new_comps = []
    for comp, f in zip(u.components, force):
        rhs = comp / dt - advect(grid, u, comp) + f
        new_comps.append(solve_shifted_poisson(grid, alpha, rhs / nu, bc=None))
    return project_div_free(grid, VelocityField(grid, new_comps))


def _extrema(c1, c2) -> dict[str, float]:
    return {
        "min_c1": float(np.min(c1)),
        "max_c1": float(np.max(c1)),
        "min_c2": float(np.min(c2)),
        "max_c2": float(np.max(c2)),
    }


def step_npns(s: State, cfg: NpnsConfig, _ws: _StepWorkspace | None = None) -> State:
    """Advance one time step; see the module docstring for the scheme."""
    if _ws is None:
        _ws = _StepWorkspace(cfg)
    g = cfg.grid
    p = cfg.params
    dt = cfg.dt
    phiw = _ws.phiw
    t_new = s.t + dt

    adv1 = advect(g, s.u, s.c1) if g.d == 2 else 0.0
    adv2 = advect(g, s.u, s.c2) if g.d == 2 else 0.0
    drift1 = p.z1 * p.D1 * div_a_grad(g, s.c1, phiw)
    drift2 = p.z2 * p.D2 * div_a_grad(g, s.c2, phiw)

    if cfg.stiff_mode == "implicit-coupled":
        b1 = s.c1 / dt - adv1 + drift1
        b2 = s.c2 / dt - adv2 + drift2
        if g.d == 1:
            A = _coupled_banded_1d(g, p, dt, s.c1, s.c2)
            x = np.empty(3 * g.ny)
            x[0::3] = s.c1[0]
            x[1::3] = s.c2[0]
            x[2::3] = s.psi[0]
            b = np.zeros_like(x)
            b[0::3] = b1[0]
            b[1::3] = b2[0]
            r = b - A.matvec(x)
            for idx in (0, 1, 2, -3, -2, -1):
                r[idx] = 0.0
            delta = A.solve(r)
            x = x + delta
            c1 = x[0::3][None, :].copy()
            c2 = x[1::3][None, :].copy()
        else:
            A = _coupled_sparse_2d(g, p, dt, s.c1, s.c2)
            N = g.nx * g.ny
            x = np.concatenate([s.c1.ravel(), s.c2.ravel(), s.psi.ravel()])
            b = np.concatenate([b1.ravel(), b2.ravel(), np.zeros(N)])
            r = b - A @ x
            wall = np.zeros(g.shape, dtype=bool)
            wall[:, 0] = True
            wall[:, -1] = True
            r[np.concatenate([wall.ravel()] * 3)] = 0.0
            delta = scipy.sparse.linalg.splu(A).solve(r)
            x = x + delta
            c1 = x[:N].reshape(g.shape)
            c2 = x[N : 2 * N].reshape(g.shape)
    else:
        # explicit coupling: the stiff term uses psi at level n
        psi_tot = s.psi + phiw
        c1 = _implicit_diffusion(g, p.D1, dt, s.c1, -adv1 + p.z1 * p.D1 * div_a_grad(g, s.c1, psi_tot))
        c2 = _implicit_diffusion(g, p.D2, dt, s.c2, -adv2 + p.z2 * p.D2 * div_a_grad(g, s.c2, psi_tot))

    if not (np.all(np.isfinite(c1)) and np.all(np.isfinite(c2))):
        raise StepError(t_new, "non-finite concentration after implicit solve", _extrema(s.c1, s.c2))
    if np.min(c1) <= 0.0 or np.min(c2) <= 0.0:
        raise StepError(t_new, "concentration lost positivity", _extrema(c1, c2))

    # exact wall reimposition, then the charge relation defines psi
    c1[:, 0] = _ws.gamma1_trace[0]
    c1[:, -1] = _ws.gamma1_trace[1]
    c2[:, 0] = _ws.gamma2_trace[0]
    c2[:, -1] = _ws.gamma2_trace[1]
    rho = p.z1 * c1 + p.z2 * c2
    psi = solve_poisson(g, rho, coeff=p.eps ** 2)

    if g.d == 1:
        u = VelocityField.zero(g)
    else:
        gpsi = grad(g, psi + phiw)
        force = [-rho * df for df in gpsi]
        u = advance_velocity(g, s.u, dt, p.nu, force)
    return State(t=t_new, c1=c1, c2=c2, u=u, psi=psi)


def _implicit_diffusion(grid, D, dt, c, explicit):
    # delta form: the increment solves (1/(dt D) - Lap) delta = Lap c + explicit/D
    # with zero wall data, so wall values and exact equilibria are untouched
    alpha = 1.0 / (dt * D)
    rhs = laplacian(grid, c) + explicit / D
    return c + solve_shifted_poisson(grid, alpha, rhs, bc=None)


def run_npns(init: State, cfg: NpnsConfig, save_every: int = 1) -> Trajectory:
    """March to t_end, saving every save_every-th step plus the endpoints.

    Aborts through MaxPrincipleViolation when a concentration leaves the
    band implied by the wall data and the initial state by more than the
    blow-up guard of 1e-4.
    """
    if save_every < 1:
        raise ValueError(f"save_every must be >= 1, got {save_every}")
    g = cfg.grid
    p = cfg.params
    ws = _StepWorkspace(cfg)
    # per-species admissible band from wall data and initial state
    bounds = (
        min(float(np.min(cfg.bdata.gamma1)), float(np.min(init.c1))),
        max(float(np.max(cfg.bdata.gamma1)), float(np.max(init.c1))),
        min(float(np.min(cfg.bdata.gamma2)), float(np.min(init.c2))),
        max(float(np.max(cfg.bdata.gamma2)), float(np.max(init.c2))),
    )

    traj = Trajectory()

    def record(state: State) -> None:
        traj.snapshots.append(state.copy())
        E = free_energy(g, state, cfg.bdata, p)
        ext = (np.min(state.c1), np.max(state.c1), np.min(state.c2), np.max(state.c2))
        traj.diagnostics.append(state.t, E, ext)

    record(init)
    s = init
    n = cfg.n_steps
    for k in range(1, n + 1):
        s = step_npns(s, cfg, ws)
        s.t = k * cfg.dt  # avoid accumulated addition drift
        report = max_principle_check(s.c1, s.c2, bounds, tol=1e-4)
        if not report.ok:
            logger.error("max principle violated at t=%.6g: %s", s.t, report)
            raise MaxPrincipleViolation(s.t, report)
        if k % save_every == 0 or k == n:
            record(s)
    if len(traj) >= 3:
        res = dissipation_identity_residual(g, traj.snapshots, cfg.bdata, p)
        traj.diagnostics.dissipation_residual = [float(r) for r in res]
    logger.info("run complete: %d steps, %d snapshots, t_end=%.6g", n, len(traj), s.t)
    return traj
