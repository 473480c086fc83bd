"""Energy functionals, identity residuals, and rate fitting.

Everything in here is evaluated with the same quadrature and stencils
as the solvers, so discrete identities close as far as the time
discretization allows; nothing is re-derived with an independent
scheme (the tests do that instead).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import harmonic_extension
from .grid import ChannelGrid, State, VelocityField
from .operators import grad, integrate, norm_l2
from .params import BoundaryData, Params

__all__ = [
    "phi_entropy",
    "free_energy",
    "electrochemical_potentials",
    "dissipation_identity_residual",
    "dissipation_lower_bound",
    "modulated_energy",
    "max_principle_check",
    "MaxPrincipleReport",
    "rate_fit",
    "DiagnosticsRecord",
]


def phi_entropy(s):
    """Entropy density s log s - s + 1, nonnegative, zero only at s = 1.

    Accepts scalars or arrays; rejects non-positive input because the
    callers feed concentrations whose positivity is an invariant, and a
    silent nan here would surface far from the real bug.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise ValueError(f"entropy argument must be positive, min={np.min(s)}")
    # near s = 1 the naive form cancels catastrophically; writing it in
    # x = s - 1 keeps the absolute error at the x * ulp scale
    x = s - 1.0
    out = np.where(np.abs(x) < 0.5, (1.0 + x) * np.log1p(x) - x, s * np.log(s) - s + 1.0)
    return float(out) if out.ndim == 0 else out


def _grad_sq(grid: ChannelGrid, f: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    for df in grad(grid, f):
        out += df * df
    return out


def free_energy(grid: ChannelGrid, s: State, bdata: BoundaryData, p: Params) -> float:
    """Free energy: wall-relative entropy + electric field + kinetic energy."""
    if np.any(s.c1 <= 0.0) or np.any(s.c2 <= 0.0):
        raise ValueError("free energy undefined for non-positive concentrations")
    g1 = harmonic_extension(grid, bdata.gamma1)
    g2 = harmonic_extension(grid, bdata.gamma2)
    ent = integrate(grid, g1 * phi_entropy(s.c1 / g1) + g2 * phi_entropy(s.c2 / g2))
    elec = 0.5 * p.eps ** 2 * integrate(grid, _grad_sq(grid, s.psi))
    kin = 0.0
    for comp in s.u.components:
        kin += 0.5 * integrate(grid, comp * comp)
    return float(ent + elec + kin)


def electrochemical_potentials(
    grid: ChannelGrid, s: State, bdata: BoundaryData, p: Params
) -> dict[str, np.ndarray]:
    """Potentials mu_i = log c_i + z_i(psi + phiW) and their wall-data
    counterparts mu_i_star = log Gamma_i + z_i phiW."""
    if np.any(s.c1 <= 0.0) or np.any(s.c2 <= 0.0):
        raise ValueError("potentials undefined for non-positive concentrations")
    phiw = harmonic_extension(grid, bdata.w)
    g1 = harmonic_extension(grid, bdata.gamma1)
    g2 = harmonic_extension(grid, bdata.gamma2)
    total = s.psi + phiw
    return {
        "mu1": np.log(s.c1) + p.z1 * total,
        "mu2": np.log(s.c2) + p.z2 * total,
        "mu1_star": np.log(g1) + p.z1 * phiw,
        "mu2_star": np.log(g2) + p.z2 * phiw,
    }


def _identity_sides(grid, s: State, bdata, p) -> tuple[float, float, float]:
    """Spatial terms of the energy balance at one snapshot.

    Returns (dissipation, right_side, visc) where the balance reads
    dE/dt + visc + dissipation = right_side.
    """
    phiw = harmonic_extension(grid, bdata.w)
    g1 = harmonic_extension(grid, bdata.gamma1)
    g2 = harmonic_extension(grid, bdata.gamma2)
    total = s.psi + phiw
    rho = s.rho(p)

    visc = 0.0
    for comp in s.u.components:
        visc += p.nu * integrate(grid, _grad_sq(grid, comp))

    diss = 0.0
    rhs = 0.0
    for c, z, D, gam in ((s.c1, p.z1, p.D1, g1), (s.c2, p.z2, p.D2, g2)):
        gmu = [dc / c + z * dt for dc, dt in zip(grad(grid, c), grad(grid, total))]
        gmu_star = [dg / gam + z * dw for dg, dw in zip(grad(grid, gam), grad(grid, phiw))]
        diss += D * integrate(grid, c * sum(a * a for a in gmu))
        rhs += D * integrate(grid, c * sum(a * b for a, b in zip(gmu, gmu_star)))
        # transport against the wall-data gradients; no diffusivity factor
        glog_gam = [dg / gam for dg in grad(grid, gam)]
        rhs -= integrate(grid, c * sum(uc * a for uc, a in zip(s.u.components, glog_gam)))
    rhs -= integrate(grid, rho * sum(uc * dw for uc, dw in zip(s.u.components, grad(grid, phiw))))
    return diss, rhs, visc


def dissipation_identity_residual(
    grid: ChannelGrid,
    snapshots: list[State],
    bdata: BoundaryData,
    p: Params,
) -> np.ndarray:
    """Normalized residual of the energy balance along a trajectory.

    dE/dt is a centered difference of the free energy on the snapshot
    times (one-sided second order at the ends), the spatial terms are
    evaluated per snapshot, and the mismatch is normalized by the size
    of the dissipation plus the right side so the result is a relative
    quantity comparable across runs.
    """
    if len(snapshots) < 3:
        raise ValueError(f"need at least 3 snapshots for a centered residual, got {len(snapshots)}")
    times = np.array([s.t for s in snapshots])
    E = np.array([free_energy(grid, s, bdata, p) for s in snapshots])
    dEdt = np.gradient(E, times, edge_order=2)
    res = np.empty(len(snapshots))
    for k, s in enumerate(snapshots):
        diss, rhs, visc = _identity_sides(grid, s, bdata, p)
        num = dEdt[k] + visc + diss - rhs
        den = max(abs(visc) + diss + abs(rhs), 1e-14)
        res[k] = num / den
    return res


def dissipation_lower_bound(
    grid: ChannelGrid, s: State, bdata: BoundaryData, p: Params
) -> dict[str, float]:
    """Both sides of the coercivity bound on the entropy dissipation.

    gradient terms + field term + charge term <= M * dissipation, with
    the explicit constant M = max(Lambda/D*, 1/((z1^2+z2^2) lambda D*),
    1/(2 D*)).  Returns the sides and the constant; callers assert with
    an O(h^2) slack since the continuous proof integrates by parts once.
    """
    phiw = harmonic_extension(grid, bdata.w)
    total = s.psi + phiw
    rho = s.rho(p)

    diss = 0.0
    grad_c_sq = 0.0
    for c, z, D in ((s.c1, p.z1, p.D1), (s.c2, p.z2, p.D2)):
        gmu = [dc / c + z * dt for dc, dt in zip(grad(grid, c), grad(grid, total))]
        diss += D * integrate(grid, c * sum(a * a for a in gmu))
        grad_c_sq += integrate(grid, _grad_sq(grid, c))
    field_sq = integrate(grid, _grad_sq(grid, total))
    charge_sq = integrate(grid, (rho / p.eps) ** 2)

    zz = p.z1 ** 2 + p.z2 ** 2
    M = max(p.c_upper / p.D_star, 1.0 / (zz * p.c_lower * p.D_star), 1.0 / (2.0 * p.D_star))
    return {
        "lhs": grad_c_sq + field_sq + charge_sq,
        "rhs": M * diss,
        "dissipation": diss,
        "constant": M,
    }


def modulated_energy(
    grid: ChannelGrid,
    s: State,
    p: Params,
    c1_lim: np.ndarray,
    u_lim: VelocityField,
    psi_lim: np.ndarray,
) -> dict[str, float]:
    """Relative energy H and dissipation distance Theta against a limit state.

    The limit concentrations enter through c1 alone; c2 is reconstructed
    from the zero-charge constraint so the pair is always admissible.
    """
    c2_lim = -p.z1 * c1_lim / p.z2
    for c in (s.c1, s.c2):
        if np.any(c <= 0.0):
            raise ValueError("modulated energy undefined for non-positive concentrations")
    if np.any(c1_lim <= 0.0):
        raise ValueError("limit concentration must be positive")

    H = integrate(grid, c1_lim * phi_entropy(s.c1 / c1_lim) + c2_lim * phi_entropy(s.c2 / c2_lim))
    H += 0.5 * p.eps ** 2 * integrate(grid, _grad_sq(grid, s.psi))
    for comp, comp_lim in zip(s.u.components, u_lim.components):
        H += 0.5 * integrate(grid, (comp - comp_lim) ** 2)

    theta = 0.0
    for c, c_lim, D, z in ((s.c1, c1_lim, p.D1, p.z1), (s.c2, c2_lim, p.D2, p.z2)):
        dc = grad(grid, c)
        dcl = grad(grid, c_lim)
        theta += D * integrate(grid, sum((a - b) ** 2 for a, b in zip(dc, dcl)) / c)
        dpsi = grad(grid, s.psi)
        dpsil = grad(grid, psi_lim)
        theta += z ** 2 * D * integrate(grid, c * sum((a - b) ** 2 for a, b in zip(dpsi, dpsil)))
    theta += p.D_star * integrate(grid, (s.rho(p) / p.eps) ** 2)
    for comp, comp_lim in zip(s.u.components, u_lim.components):
        theta += p.nu * integrate(grid, _grad_sq(grid, comp - comp_lim))
    return {"H": float(H), "Theta": float(theta)}


@dataclass
class MaxPrincipleReport:
    ok: bool
    min_c1: float
    max_c1: float
    min_c2: float
    max_c2: float
    worst_violation: float
    worst_species: int | None
    worst_index: tuple[int, int] | None


def max_principle_check(
    c1: np.ndarray,
    c2: np.ndarray,
    bounds: tuple[float, float, float, float],
    tol: float,
) -> MaxPrincipleReport:
    """Check lambda_i - tol <= c_i <= Lambda_i + tol.

    bounds = (lambda1, Lambda1, lambda2, Lambda2).  On failure the
    report carries the worst offending node so run logs are actionable.
    """
    lo1, hi1, lo2, hi2 = bounds
    worst = 0.0
    species = None
    index = None
    for i, (c, lo, hi) in enumerate(((c1, lo1, hi1), (c2, lo2, hi2)), start=1):
        under = (lo - tol) - c
        over = c - (hi + tol)
        viol = np.maximum(under, over)
        v = float(np.max(viol))
        if v > worst:
            worst = v
            species = i
            index = tuple(int(j) for j in np.unravel_index(np.argmax(viol), c.shape))
    return MaxPrincipleReport(
        ok=worst <= 0.0,
        min_c1=float(np.min(c1)),
        max_c1=float(np.max(c1)),
        min_c2=float(np.min(c2)),
        max_c2=float(np.max(c2)),
        worst_violation=worst,
        worst_species=species,
        worst_index=index,
    )


def rate_fit(pairs) -> dict[str, float]:
    """Least-squares slope of log(error) against log(eps).

    Needs at least three strictly positive pairs; returns slope,
    intercept (natural log), and r^2 of the fit.
    """
    pairs = [(float(e), float(err)) for e, err in pairs]
    if len(pairs) < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {len(pairs)}")
    if any(e <= 0.0 or err <= 0.0 for e, err in pairs):
        raise ValueError("rate fit requires positive eps and error values")
    x = np.log([e for e, _ in pairs])
    y = np.log([err for _, err in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot > 0.0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res < 1e-28 else 0.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


@dataclass
class DiagnosticsRecord:
    """Parallel time series collected along a run.

    H and Theta are NaN when no limit reference was supplied; the
    residual column is NaN until dissipation_identity_residual fills it
    in after the run (it needs the whole trajectory).
    """

    t: list[float] = field(default_factory=list)
    E: list[float] = field(default_factory=list)
    H: list[float] = field(default_factory=list)
    Theta: list[float] = field(default_factory=list)
    min_c1: list[float] = field(default_factory=list)
    max_c1: list[float] = field(default_factory=list)
    min_c2: list[float] = field(default_factory=list)
    max_c2: list[float] = field(default_factory=list)
    dissipation_residual: list[float] = field(default_factory=list)

    def append(self, t, E, extrema, H=math.nan, Theta=math.nan):
        self.t.append(float(t))
        self.E.append(float(E))
        self.H.append(float(H))
        self.Theta.append(float(Theta))
        mn1, mx1, mn2, mx2 = extrema
        self.min_c1.append(float(mn1))
        self.max_c1.append(float(mx1))
        self.min_c2.append(float(mn2))
        self.max_c2.append(float(mx2))
        self.dissipation_residual.append(math.nan)

    def __len__(self) -> int:
        return len(self.t)

    def columns(self) -> dict[str, list[float]]:
        return {
            "t": self.t,
            "E": self.E,
            "H": self.H,
            "Theta": self.Theta,
            "min_c1": self.min_c1,
            "max_c1": self.max_c1,
            "min_c2": self.min_c2,
            "max_c2": self.max_c2,
            "dissipation_residual": self.dissipation_residual,
        }
