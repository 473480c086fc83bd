"""Wall, initial, and corner layers plus composite field assembly.

Three fast structures sit on top of the inner expansion.  Near each
wall the charge screens over a width eps, with a profile that is a pure
exponential in the stretched coordinate and therefore available in
closed form.  After a quenched start the whole channel relaxes on the
fast time t / eps^2, governed by a linear drift equation for the excess
charge coupled to its own potential.  Where wall and initial effects
meet, a corner region obeys a half-line diffusion system in stretched
space and fast time.  This module builds all three objects and
assembles them, together with the inner terms, into composite fields on
the physical grid; the difference between a resolved state and such a
composite is the quantity whose smallness the rate experiments measure.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .elliptic import solve_div_form, solve_poisson
from .grid import ChannelGrid, State, VelocityField
from .limit import InnerExpansion
from .operators import div_a_grad, laplacian
from .params import Params

__all__ = [
    "FastVariables",
    "BoundaryLayerProfile",
    "InitialLayerState",
    "MixedLayerState",
    "LayerSet",
    "CompositeApproximation",
    "smoothstep",
    "cutoff_left",
    "cutoff_right",
    "boundary_layer",
    "wall_layers",
    "solve_initial_layer",
    "initial_layer_traces",
    "clustered_xi_grid",
    "solve_mixed_layer",
    "assemble_composite",
    "residual",
]

log = logging.getLogger(__name__)

_WALLS = ("left", "right")


# ---------------------------------------------------------------------------
# stretched coordinates and cutoffs


@dataclass(frozen=True)
class FastVariables:
    """Stretched coordinates attached to slow space-time points.

    tau is the fast time t / eps^2; xi and eta measure the distance to
    the lower and upper wall in units of eps.  All three are nonnegative
    wherever the slow point lies in the physical domain.
    """

    tau: float
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self) -> None:
        if self.tau < 0.0 or np.any(np.asarray(self.xi) < 0.0) or np.any(np.asarray(self.eta) < 0.0):
            raise ValueError("fast variables must be nonnegative on the physical domain")

    @classmethod
    def at(cls, t: float, y, eps: float) -> "FastVariables":
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        y = np.asarray(y, dtype=float)
        return cls(tau=t / eps ** 2, xi=y / eps, eta=(1.0 - y) / eps)


def smoothstep(u) -> np.ndarray:
    """Quintic ramp: 0 for u <= 0, 1 for u >= 1, twice differentiable."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u ** 3 * (10.0 + u * (6.0 * u - 15.0))


def cutoff_left(y) -> np.ndarray:
    """Lower-wall cutoff: identically 1 on [0, 1/4] and 0 on [1/2, 1]."""
    y = np.asarray(y, dtype=float)
    return smoothstep((0.5 - y) / 0.25)


def cutoff_right(y) -> np.ndarray:
    """Upper-wall cutoff, the mirror image of :func:`cutoff_left`."""
    return cutoff_left(1.0 - np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# wall screening profiles (closed form)


@dataclass(frozen=True)
class BoundaryLayerProfile:
    """Second-order screening profile attached to one wall.

    Every component is coefficient * exp(-rate * xi) in the stretched
    wall distance xi, so derivatives of any order are analytic: pass
    ``derivative=n`` to multiply by (-rate)^n.  Velocity and pressure
    carry no wall layer at this order; the methods exist so composite
    code can treat all components uniformly.

    Attributes
    ----------
    wall : {"left", "right"}
    amplitude : ndarray, shape (nx,)
        Wall trace of the curvature of the zeroth-order potential; this
        single function determines the whole profile.
    rate : ndarray, shape (nx,)
        Inverse screening width sqrt(z1 (z1 - z2) gamma1).
    gamma1 : ndarray, shape (nx,)
        Wall trace of the first species.
    """

    wall: str
    amplitude: np.ndarray
    rate: np.ndarray
    gamma1: np.ndarray
    z1: float
    z2: float

    def _eval(self, coef: np.ndarray, xi, derivative: int) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = coef[:, None] * np.exp(-self.rate[:, None] * xi[None, :])
        if derivative:
            out = out * (-self.rate[:, None]) ** derivative
        return out

    def charge(self, xi, derivative: int = 0) -> np.ndarray:
        return self._eval(self.amplitude, xi, derivative)

    def c1(self, xi, derivative: int = 0) -> np.ndarray:
        return self._eval(self.amplitude / (self.z1 - self.z2), xi, derivative)

    def c2(self, xi, derivative: int = 0) -> np.ndarray:
        return self._eval(-self.amplitude / (self.z1 - self.z2), xi, derivative)

    def phi(self, xi, derivative: int = 0) -> np.ndarray:
        coef = -self.amplitude / (self.z1 * (self.z1 - self.z2) * self.gamma1)
        return self._eval(coef, xi, derivative)

    def velocity(self, xi) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return np.zeros((self.amplitude.size, xi.size))

    def pressure(self, xi) -> np.ndarray:
        return self.velocity(xi)


def boundary_layer(wall: str, amplitude, gamma1_trace, p: Params) -> BoundaryLayerProfile:
    """Build the closed-form wall profile from its driving trace.

    Parameters
    ----------
    wall : {"left", "right"}
    amplitude : array_like
        Trace of the curvature of the zeroth-order potential at this
        wall; scalar or shape (nx,).
    gamma1_trace : array_like
        Wall concentration of the first species, strictly positive.
    p : Params

    Returns
    -------
    BoundaryLayerProfile
        With charge = amplitude * exp(-rate xi), the two species at
        +-amplitude / (z1 - z2), and the potential at
        -amplitude / (z1 (z1 - z2) gamma1) times the same exponential.
    """
    if wall not in _WALLS:
        raise ValueError(f"wall must be one of {_WALLS}, got {wall!r}")
    amplitude, g1 = np.broadcast_arrays(
        np.atleast_1d(np.asarray(amplitude, dtype=float)),
        np.atleast_1d(np.asarray(gamma1_trace, dtype=float)),
    )
    if np.any(g1 <= 0.0):
        raise ValueError(f"wall concentration must be positive, got min {g1.min():.6g}")
    rate = np.sqrt(p.z1 * (p.z1 - p.z2) * g1)
    return BoundaryLayerProfile(
        wall=wall,
        amplitude=amplitude.copy(),
        rate=rate,
        gamma1=g1.copy(),
        z1=p.z1,
        z2=p.z2,
    )


def wall_layers(inner: InnerExpansion, k: int) -> tuple[BoundaryLayerProfile, BoundaryLayerProfile]:
    """Left and right wall profiles at time index k of an inner expansion.

    The driving amplitude is the wall trace of the discrete curvature of
    the stored zeroth-order potential, evaluated with the same operator
    the order-two inner solve uses, so the wall values cancel exactly in
    the composite.
    """
    g = inner.grid
    lap = laplacian(g, inner.phi[0][k])
    left = boundary_layer("left", lap[:, 0], inner.bdata.gamma1[0], inner.params)
    right = boundary_layer("right", lap[:, -1], inner.bdata.gamma1[1], inner.params)
    return left, right


# ---------------------------------------------------------------------------
# fast-time relaxation of the excess charge


@dataclass
class InitialLayerState:
    """One snapshot of the fast-time charge relaxation.

    rho is the second-order excess charge and phi its potential, with
    -lap phi = rho and zero wall values.  The species contents follow
    from the charge by fixed diffusivity weights, so they are exposed as
    accessors instead of stored fields.
    """

    tau: float
    rho: np.ndarray
    phi: np.ndarray

    def c1(self, p: Params) -> np.ndarray:
        return p.D1 * self.rho / (p.z1 * p.D1 - p.z2 * p.D2)

    def c2(self, p: Params) -> np.ndarray:
        return -p.D2 * self.rho / (p.z1 * p.D1 - p.z2 * p.D2)


def _slave_wall_charge(grid: ChannelGrid, rho: np.ndarray, phi: np.ndarray) -> None:
    # the wall trace is slaved to the potential through the one-sided
    # poisson identity, as in the continuous problem; marching it on a
    # one-sided flux divergence instead parks the accumulated truncation
    # error on the wall rows, where nothing ever damps it
    lap = laplacian(grid, phi)
    rho[:, 0] = -lap[:, 0]
    rho[:, -1] = -lap[:, -1]


def solve_initial_layer(
    grid: ChannelGrid,
    p: Params,
    c1_base: np.ndarray,
    rho0: np.ndarray,
    tau_grid,
    forcing=None,
) -> list[InitialLayerState]:
    """March the fast-time charge relaxation by implicit Euler.

    The excess charge obeys d rho / d tau = b div(c1_base grad phi)
    with -lap phi = rho, phi zero at the walls and b = z1 (z1 D1 - z2 D2).
    Eliminating the new charge turns each step into one divergence-form
    solve: -div((1 + dtau b c1_base) grad phi) = rho_old.  The charge
    update reuses the conservative flux divergence in the interior; the
    wall rows are slaved to -lap phi through the one-sided stencil, so
    the trace relaxes together with the field instead of freezing once
    the interior has. Wall values of any forcing are ignored for the
    same reason.

    Parameters
    ----------
    grid : ChannelGrid
    p : Params
    c1_base : ndarray
        Frozen background concentration of the first species (its
        initial value); must be strictly positive or the drift operator
        loses ellipticity.
    rho0 : ndarray
        Charge at the first tau node.
    tau_grid : array_like
        Strictly increasing, nonnegative fast times; the first entry
        carries the initial condition.
    forcing : callable, optional
        Extra source forcing(tau) -> (nx, ny) added to the charge
        equation.  The next order of the hierarchy drives its potential
        with the fields of this one through such a term.

    Returns
    -------
    list of InitialLayerState
        One state per tau node, the first holding rho0 itself.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.ndim != 1 or tau_grid.size < 1:
        raise ValueError("tau grid must be a nonempty 1-d array")
    if tau_grid[0] < 0.0 or np.any(np.diff(tau_grid) <= 0.0):
        raise ValueError("tau grid must be nonnegative and strictly increasing")
    c1_base = np.asarray(c1_base, dtype=float)
    rho = np.array(rho0, dtype=float, copy=True)
    if c1_base.shape != grid.shape or rho.shape != grid.shape:
        raise ValueError(f"fields must have grid shape {grid.shape}")
    lam = float(np.min(c1_base))
    if lam <= 0.0:
        raise ValueError(f"background concentration must stay positive, its min is {lam:.6g}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("initial charge must be finite")

    b = p.z1 * (p.z1 * p.D1 - p.z2 * p.D2)
    states = [InitialLayerState(tau=float(tau_grid[0]), rho=rho.copy(), phi=solve_poisson(grid, rho))]
    for n in range(tau_grid.size - 1):
        dtau = float(tau_grid[n + 1] - tau_grid[n])
        rhs = rho
        if forcing is not None:
            rhs = rhs + dtau * np.asarray(forcing(float(tau_grid[n + 1])), dtype=float)
        phi = solve_div_form(grid, 1.0 + dtau * b * c1_base, -rhs)
        rho = rhs + dtau * b * div_a_grad(grid, c1_base, phi)
        _slave_wall_charge(grid, rho, phi)
        states.append(InitialLayerState(tau=float(tau_grid[n + 1]), rho=rho.copy(), phi=phi))
    return states


def initial_layer_traces(states: list[InitialLayerState], p: Params, wall: str):
    """Corner boundary data extracted from a relaxation history.

    The corner layers are pinned to minus the relaxation species at the
    wall.  Tangentially varying traces are averaged, which is exact
    whenever the wall row has no x dependence; the corner solver treats
    one wall column at a time.

    Returns
    -------
    (tau, a1, a2) : three ndarrays of length len(states)
    """
    if wall not in _WALLS:
        raise ValueError(f"wall must be one of {_WALLS}, got {wall!r}")
    j = 0 if wall == "left" else -1
    taus = np.array([s.tau for s in states])
    rho_wall = np.array([float(np.mean(s.rho[:, j])) for s in states])
    scale = p.z1 * p.D1 - p.z2 * p.D2
    return taus, -p.D1 * rho_wall / scale, p.D2 * rho_wall / scale


# ---------------------------------------------------------------------------
# corner (mixed) layers on the half line


def clustered_xi_grid(xi_max: float = 40.0, n: int = 800, stretch: float = 4.0) -> np.ndarray:
    """Half-line nodes crowded toward the wall end.

    Exponential image of a uniform parameter: with the default stretch
    the spacing at the origin is roughly stretch / expm1(stretch) times
    the uniform one, while the far end still reaches xi_max where the
    profiles are dead.
    """
    if xi_max <= 0.0 or n < 8:
        raise ValueError("need xi_max > 0 and at least 8 nodes")
    u = np.linspace(0.0, 1.0, n)
    return xi_max * np.expm1(stretch * u) / np.expm1(stretch)


@dataclass
class MixedLayerState:
    """Snapshot of the shifted corner unknowns at one fast time.

    alpha1, alpha2 are the species after subtracting the boundary lift
    a_i(tau) e^{-xi}; they vanish at both ends of the truncated half
    line.  The physical corner species are recovered by adding the lift
    back.
    """

    wall: str
    tau: float
    xi_grid: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    a1: float
    a2: float

    def c1(self) -> np.ndarray:
        return self.alpha1 + self.a1 * np.exp(-self.xi_grid)

    def c2(self) -> np.ndarray:
        return self.alpha2 + self.a2 * np.exp(-self.xi_grid)

    def omega(self, p: Params) -> np.ndarray:
        """Charge of the shifted unknowns, z1 alpha1 + z2 alpha2."""
        return p.z1 * self.alpha1 + p.z2 * self.alpha2


def _nonuniform_second_derivative(xi: np.ndarray) -> scipy.sparse.csr_matrix:
    # three-point stencil on a nonuniform grid, rows only on interior
    # nodes; second-order on smoothly graded spacings
    n = xi.size
    hm = xi[1:-1] - xi[:-2]
    hp = xi[2:] - xi[1:-1]
    lo = 2.0 / (hm * (hm + hp))
    hi = 2.0 / (hp * (hm + hp))
    rows = np.arange(1, n - 1)
    data = np.concatenate([lo, -(lo + hi), hi])
    cols = np.concatenate([rows - 1, rows, rows + 1])
    return scipy.sparse.csr_matrix((data, (np.tile(rows, 3), cols)), shape=(n, n))


def solve_mixed_layer(
    a1,
    a2,
    gamma1: float,
    gamma2: float,
    p: Params,
    xi_grid,
    tau_grid,
    wall: str = "left",
    alpha0=None,
    strict: bool = False,
) -> list[MixedLayerState]:
    """March the corner-layer system in the shifted unknowns.

    Subtracting the lift a_i(tau) e^{-xi} homogenizes the wall value;
    the shifted species alpha_i then satisfy a coupled diffusion system
    with the charge of the pair entering through the frozen corner
    concentrations, forced by (D_i a_i - da_i/dtau - z_i D_i gamma_i r)
    e^{-xi} with r = z1 a1 + z2 a2.  Implicit Euler in tau, the
    three-point nonuniform stencil in xi, both ends pinned to zero; one
    sparse factorization is reused across steps of equal length.

    Parameters
    ----------
    a1, a2 : array_like
        Corner traces sampled on tau_grid (minus the relaxation species
        at the wall, see :func:`initial_layer_traces`).
    gamma1, gamma2 : float
        Corner concentrations, strictly positive.
    p : Params
    xi_grid : array_like
        Strictly increasing half-line nodes starting at 0; see
        :func:`clustered_xi_grid`.
    tau_grid : array_like
        Strictly increasing fast times.
    wall : {"left", "right"}
    alpha0 : array_like, optional
        Initial shifted unknowns, concatenated (alpha1, alpha2) of
        shape (2, n); defaults to zero, which corresponds to a pure
        lift a_i(0) e^{-xi} at the initial time.
    strict : bool
        Escalate the truncation warning to an error.

    Returns
    -------
    list of MixedLayerState

    Warns
    -----
    UserWarning
        If more than 1% of the species mass sits in the far tenth of
        the truncated half line at any saved time, the domain is too
        short for the profile; in strict mode this raises instead.
    """
    if wall not in _WALLS:
        raise ValueError(f"wall must be one of {_WALLS}, got {wall!r}")
    if gamma1 <= 0.0 or gamma2 <= 0.0:
        raise ValueError(f"corner concentrations must be positive, got {gamma1}, {gamma2}")
    xi = np.asarray(xi_grid, dtype=float)
    if xi.ndim != 1 or xi.size < 8 or xi[0] != 0.0 or np.any(np.diff(xi) <= 0.0):
        raise ValueError("xi grid must start at 0 and increase strictly, with at least 8 nodes")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size < 1 or np.any(np.diff(taus) <= 0.0):
        raise ValueError("tau grid must be strictly increasing")
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    if a1.shape != taus.shape or a2.shape != taus.shape:
        raise ValueError(f"traces must be sampled on the tau grid, expected shape {taus.shape}")

    n = xi.size
    lap = _nonuniform_second_derivative(xi)
    eye = scipy.sparse.identity(n, format="csr")
    # interior mask keeps the pinned end rows as pure identity
    mask = scipy.sparse.diags(np.r_[0.0, np.ones(n - 2), 0.0])
    decay = np.exp(-xi)

    if alpha0 is None:
        al1 = np.zeros(n)
        al2 = np.zeros(n)
    else:
        alpha0 = np.asarray(alpha0, dtype=float)
        if alpha0.shape != (2, n):
            raise ValueError(f"alpha0 must have shape (2, {n}), got {alpha0.shape}")
        al1, al2 = alpha0[0].copy(), alpha0[1].copy()
        if al1[0] != 0.0 or al1[-1] != 0.0 or al2[0] != 0.0 or al2[-1] != 0.0:
            raise ValueError("shifted unknowns must vanish at both ends")

    out = [MixedLayerState(wall, float(taus[0]), xi, al1.copy(), al2.copy(),
                           float(a1[0]), float(a2[0]))]
    lus: dict[float, object] = {}
    for m in range(taus.size - 1):
        dtau = float(taus[m + 1] - taus[m])
        lu = lus.get(dtau)
        if lu is None:
            blocks = [
                [eye - dtau * p.D1 * lap + dtau * p.z1 * p.D1 * gamma1 * p.z1 * mask,
                 dtau * p.z1 * p.D1 * gamma1 * p.z2 * mask],
                [dtau * p.z2 * p.D2 * gamma2 * p.z1 * mask,
                 eye - dtau * p.D2 * lap + dtau * p.z2 * p.D2 * gamma2 * p.z2 * mask],
            ]
            lu = scipy.sparse.linalg.splu(scipy.sparse.bmat(blocks, format="csc"))
            lus[dtau] = lu
        a1n, a2n = float(a1[m + 1]), float(a2[m + 1])
        da1 = (a1n - float(a1[m])) / dtau
        da2 = (a2n - float(a2[m])) / dtau
        r = p.z1 * a1n + p.z2 * a2n
        f1 = p.D1 * a1n - da1 - p.z1 * p.D1 * gamma1 * r
        f2 = p.D2 * a2n - da2 - p.z2 * p.D2 * gamma2 * r
        r1 = al1 + dtau * f1 * decay
        r2 = al2 + dtau * f2 * decay
        r1[0] = r1[-1] = 0.0
        r2[0] = r2[-1] = 0.0
        sol = lu.solve(np.concatenate([r1, r2]))
        al1, al2 = sol[:n], sol[n:]
        # the factorization can leave rounding dust on the pinned rows
        al1[0] = al1[-1] = 0.0
        al2[0] = al2[-1] = 0.0
        out.append(MixedLayerState(wall, float(taus[m + 1]), xi, al1.copy(), al2.copy(), a1n, a2n))

    _check_truncation(out, strict)
    return out


def _check_truncation(states: list[MixedLayerState], strict: bool) -> None:
    """Flag profiles whose mass reaches the far end of the half line."""
    xi = states[0].xi_grid
    w = np.zeros_like(xi)
    dxi = np.diff(xi)
    w[:-1] += 0.5 * dxi
    w[1:] += 0.5 * dxi
    tail = xi >= 0.9 * xi[-1]
    worst = 0.0
    for s in states:
        for c in (np.abs(s.c1()), np.abs(s.c2())):
            total = float(np.dot(w, c))
            if total > 1e-300:
                worst = max(worst, float(np.dot(w[tail], c[tail])) / total)
    if worst > 0.01:
        msg = (f"corner profile reaches the truncated end: {100 * worst:.1f}% of the mass "
               f"sits beyond xi = {0.9 * xi[-1]:.3g}; enlarge xi_max")
        if strict:
            raise ValueError(msg)
        warnings.warn(msg)
        log.warning(msg)


# ---------------------------------------------------------------------------
# composite assembly


@dataclass
class LayerSet:
    """Bundle of layer solutions feeding the composite assembly.

    Any entry may be None, in which case its term is simply absent.
    The relaxation and corner entries are whole tau histories; the
    assembly samples them at tau = t / eps^2 by linear interpolation,
    clamping beyond the last stored time (where the profiles have
    decayed).  For the wall traces to cancel exactly, the corner data
    must be extracted from the same relaxation history on the same tau
    grid.

    initial_next holds the relaxation one order up; only its potential
    enters the composite, at first order in eps.
    """

    boundary_left: BoundaryLayerProfile | None = None
    boundary_right: BoundaryLayerProfile | None = None
    initial: list[InitialLayerState] | None = None
    mixed_left: list[MixedLayerState] | None = None
    mixed_right: list[MixedLayerState] | None = None
    initial_next: list[InitialLayerState] | None = None


@dataclass
class CompositeApproximation:
    """Assembled approximation fields at one time.

    phi is the full potential (wall extension included), so comparisons
    against a solver state must add the wall extension to its psi; the
    extension is carried along as phi_wall for that purpose.
    """

    grid: ChannelGrid
    t: float
    eps: float
    variant: str
    c1: np.ndarray
    c2: np.ndarray
    phi: np.ndarray
    u: VelocityField
    phi_wall: np.ndarray


def _interp_history(taus: np.ndarray, values: list, tau: float):
    """Linear interpolation of a stored history, clamped at both ends."""
    if tau <= taus[0]:
        return values[0]
    if tau >= taus[-1]:
        return values[-1]
    k = int(np.searchsorted(taus, tau)) - 1
    w = (tau - taus[k]) / (taus[k + 1] - taus[k])
    return (1.0 - w) * values[k] + w * values[k + 1]


def _mixed_term(states: list[MixedLayerState], species: int, tau: float, stretched: np.ndarray) -> np.ndarray:
    taus = np.array([s.tau for s in states])
    history = [s.c1() if species == 1 else s.c2() for s in states]
    profile = _interp_history(taus, history, tau)
    # beyond the truncated half line the profile is treated as dead
    return np.interp(stretched, states[0].xi_grid, profile, right=0.0)


def assemble_composite(
    inner: InnerExpansion,
    layers: LayerSet,
    eps: float,
    t: float,
    variant: str = "full_S",
) -> CompositeApproximation:
    """Sum inner and layer terms into approximation fields at time t.

    Two term lists are supported.  "full_S" combines every available
    inner order (0, 1, 2) with the wall, relaxation, and corner layers,
    all layer species entering at second order in eps; the potential
    additionally takes the relaxation potential at order zero (and the
    next-order one at order one, when supplied), but no corner
    potential.  "reduced_R" keeps only the terms whose difference from
    the resolved solution obeys the three-halves rate: inner species
    through first order plus relaxation and corner species, the
    zeroth-order potential plus the relaxation potentials, and the
    zeroth-order velocity.

    Missing inner orders and missing layer entries contribute nothing,
    which is how well-prepared cases degenerate to the plain inner
    expansion.

    Parameters
    ----------
    inner : InnerExpansion
        Must store t among its snapshot times.
    layers : LayerSet
    eps : float
    t : float
    variant : {"full_S", "reduced_R"}

    Returns
    -------
    CompositeApproximation
    """
    if variant not in ("full_S", "reduced_R"):
        raise ValueError(f"variant must be 'full_S' or 'reduced_R', got {variant!r}")
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    g = inner.grid
    times = np.asarray(inner.times, dtype=float)
    idx = int(np.argmin(np.abs(times - t))) if times.size else 0
    if times.size == 0 or abs(times[idx] - t) > 1e-10 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not among the stored snapshot times")

    species_orders = (0, 1, 2) if variant == "full_S" else (0, 1)
    phi_orders = (0, 1, 2) if variant == "full_S" else (0,)
    u_orders = (0, 1) if variant == "full_S" else (0,)

    c1 = g.zeros()
    c2 = g.zeros()
    phi = g.zeros()
    u_parts = [g.zeros() for _ in range(g.d)]
    for k in inner.orders:
        if k in species_orders:
            c1 += eps ** k * inner.c1[k][idx]
            c2 += eps ** k * inner.c2[k][idx]
        if k in phi_orders:
            phi += eps ** k * inner.phi[k][idx]
        if k in u_orders:
            for j, comp in enumerate(inner.u[k][idx].components):
                u_parts[j] += eps ** k * comp

    fast = FastVariables.at(t, g.y, eps)
    f_cut = cutoff_left(g.y)[None, :]
    g_cut = cutoff_right(g.y)[None, :]

    if layers.initial is not None:
        taus = np.array([s.tau for s in layers.initial])
        rho = _interp_history(taus, [s.rho for s in layers.initial], fast.tau)
        scale = inner.params.z1 * inner.params.D1 - inner.params.z2 * inner.params.D2
        c1 += eps ** 2 * inner.params.D1 * rho / scale
        c2 += eps ** 2 * (-inner.params.D2) * rho / scale
        phi += _interp_history(taus, [s.phi for s in layers.initial], fast.tau)
    if layers.initial_next is not None:
        taus = np.array([s.tau for s in layers.initial_next])
        phi += eps * _interp_history(taus, [s.phi for s in layers.initial_next], fast.tau)

    if variant == "full_S":
        if layers.boundary_left is not None:
            b = layers.boundary_left
            c1 += eps ** 2 * f_cut * b.c1(fast.xi)
            c2 += eps ** 2 * f_cut * b.c2(fast.xi)
            phi += eps ** 2 * f_cut * b.phi(fast.xi)
        if layers.boundary_right is not None:
            b = layers.boundary_right
            c1 += eps ** 2 * g_cut * b.c1(fast.eta)
            c2 += eps ** 2 * g_cut * b.c2(fast.eta)
            phi += eps ** 2 * g_cut * b.phi(fast.eta)

    if layers.mixed_left is not None:
        c1 += eps ** 2 * f_cut * _mixed_term(layers.mixed_left, 1, fast.tau, fast.xi)[None, :]
        c2 += eps ** 2 * f_cut * _mixed_term(layers.mixed_left, 2, fast.tau, fast.xi)[None, :]
    if layers.mixed_right is not None:
        c1 += eps ** 2 * g_cut * _mixed_term(layers.mixed_right, 1, fast.tau, fast.eta)[None, :]
        c2 += eps ** 2 * g_cut * _mixed_term(layers.mixed_right, 2, fast.tau, fast.eta)[None, :]

    return CompositeApproximation(
        grid=g,
        t=float(times[idx]),
        eps=eps,
        variant=variant,
        c1=c1,
        c2=c2,
        phi=phi,
        u=VelocityField(g, u_parts),
        phi_wall=inner.phiw.copy(),
    )


def residual(state: State, comp: CompositeApproximation) -> dict:
    """Difference fields between a resolved state and a composite.

    The potential entry compares the full potential, solver psi plus
    the wall extension carried by the composite, against the composite
    potential; the other entries are plain differences.

    Returns
    -------
    dict with keys "c1", "c2", "phi" (ndarrays) and "u" (VelocityField).
    """
    if state.c1.shape != comp.c1.shape:
        raise ValueError(
            f"state and composite live on different grids: {state.c1.shape} vs {comp.c1.shape}"
        )
    if abs(state.t - comp.t) > 1e-9 * max(1.0, abs(comp.t)):
        raise ValueError(f"time mismatch: state at t={state.t}, composite at t={comp.t}")
    du = VelocityField(
        comp.grid,
        [su - cu for su, cu in zip(state.u.components, comp.u.components)],
    )
    return {
        "c1": state.c1 - comp.c1,
        "c2": state.c2 - comp.c2,
        "phi": (state.psi + comp.phi_wall) - comp.phi,
        "u": du,
    }
