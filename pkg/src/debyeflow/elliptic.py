"""Direct elliptic solvers on the channel: Poisson, variable-coefficient
divergence form, harmonic extension of wall data, and the discrete
divergence-free projection.

Everything here is a deterministic direct solve: per-mode tridiagonal
systems after an rfft in x where the coefficient is constant, banded or
sparse-LU factorizations where it is not.  No iterative methods, no
tolerances to tune.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .grid import ChannelGrid, VelocityField
from .operators import half_node_average_y

__all__ = [
    "solve_shifted_poisson",
    "solve_poisson",
    "harmonic_extension",
    "solve_div_form",
    "project_div_free",
]


def _as_traces(grid: ChannelGrid, bc) -> tuple[np.ndarray, np.ndarray]:
    """Normalize boundary data to two (nx,) trace arrays."""
    if bc is None:
        z = np.zeros(grid.nx)
        return z, z.copy()
    bc = np.asarray(bc, dtype=float)
    if bc.ndim == 0:
        v = np.full(grid.nx, float(bc))
        return v, v.copy()
    if bc.shape == (2,):
        return np.full(grid.nx, bc[0]), np.full(grid.nx, bc[1])
    if bc.shape == (2, grid.nx):
        return bc[0].copy(), bc[1].copy()
    raise ValueError(f"boundary data must be scalar, (2,), or (2, nx); got shape {bc.shape}")


def solve_shifted_poisson(
    grid: ChannelGrid,
    alpha: float,
    f: np.ndarray,
    bc=None,
) -> np.ndarray:
    """Solve (alpha - Lap) u = f with Dirichlet wall values.

    Parameters
    ----------
    alpha : float
        Non-negative zeroth-order shift; alpha = 0 gives the Poisson
        problem -Lap u = f.
    f : ndarray
        Right side, shape (nx, ny); wall rows are ignored.
    bc : None, scalar, (2,) or (2, nx)
        Dirichlet values at y = 0 and y = 1.  None means homogeneous.

    The tangential directions are diagonalized by rfft; each mode is a
    real-shifted tridiagonal system in y solved directly.
    """
    if alpha < 0.0:
        raise ValueError(f"shift must be non-negative, got alpha={alpha}")
    b0, b1 = _as_traces(grid, bc)
    h2 = grid.hy ** 2
    m = grid.ny - 2

    fh = np.fft.rfft(f, axis=0)
    b0h = np.fft.rfft(b0)
    b1h = np.fft.rfft(b1)
    uh = np.zeros_like(fh)
    uh[:, 0] = b0h
    uh[:, -1] = b1h

    lower = np.full(m, -1.0 / h2)
    upper = np.full(m, -1.0 / h2)
    for k, kappa in enumerate(grid.kx):
        diag = np.full(m, alpha + kappa ** 2 + 2.0 / h2)
        ab = np.zeros((3, m))
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        rhs = fh[k, 1:-1].copy()
        rhs[0] += b0h[k] / h2
        rhs[-1] += b1h[k] / h2
        uh[k, 1:-1] = scipy.linalg.solve_banded((1, 1), ab, rhs)
    return np.fft.irfft(uh, n=grid.nx, axis=0)


def solve_poisson(grid: ChannelGrid, f: np.ndarray, coeff: float = 1.0, bc=None) -> np.ndarray:
    """Solve -coeff * Lap u = f with Dirichlet wall values.

    coeff must be positive; by linearity the solution is 1/coeff times
    the coeff = 1 solution of the homogeneous-data part, which is how it
    is computed.
    """
    if coeff <= 0.0:
        raise ValueError(f"Poisson coefficient must be positive, got coeff={coeff}")
    if coeff == 1.0:
        return solve_shifted_poisson(grid, 0.0, f, bc)
    hom = solve_shifted_poisson(grid, 0.0, np.asarray(f, dtype=float) / coeff, bc=None)
    return hom + solve_shifted_poisson(grid, 0.0, grid.zeros(), bc)


def harmonic_extension(grid: ChannelGrid, trace) -> np.ndarray:
    """Extend wall data harmonically into the channel.

    trace is (2,), scalar, or (2, nx).  The x-mean mode is written down
    directly as the linear interpolant (the discrete solution it equals
    in exact arithmetic) so constant data extends bitwise; only the
    oscillatory remainder goes through the tridiagonal solves.
    """
    b0, b1 = _as_traces(grid, trace)
    m0, m1 = float(np.mean(b0)), float(np.mean(b1))
    out = m0 + (m1 - m0) * grid.yy
    r0, r1 = b0 - m0, b1 - m1
    if np.any(r0 != 0.0) or np.any(r1 != 0.0):
        out = out + solve_poisson(grid, grid.zeros(), bc=np.stack([r0, r1]))
    return out


def solve_div_form(
    grid: ChannelGrid,
    a: np.ndarray,
    rhs: np.ndarray,
    bc=None,
) -> np.ndarray:
    """Solve div(a grad u) = rhs with Dirichlet wall values.

    The discretization matches div_a_grad: half-node arithmetic averages
    of the coefficient, periodic wraparound in x.  The coefficient must
    be strictly positive (the solve refuses sign-degenerate input so a
    silent loss of ellipticity cannot slip through).
    """
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0.0):
        raise ValueError("divergence-form coefficient must be strictly positive")
    b0, b1 = _as_traces(grid, bc)
    h2 = grid.hy ** 2
    m = grid.ny - 2

    ah = half_node_average_y(a)

    if grid.d == 1:
        lo = ah[0, :-1]
        hi = ah[0, 1:]
        diag = -(lo + hi) / h2
        ab = np.zeros((3, m))
        ab[0, 1:] = hi[:-1] / h2
        ab[1] = diag
        ab[2, :-1] = lo[1:] / h2
        r = rhs[0, 1:-1].copy()
        r[0] -= lo[0] * b0[0] / h2
        r[-1] -= hi[-1] * b1[0] / h2
        u = grid.zeros()
        u[0, 0] = b0[0]
        u[0, -1] = b1[0]
        u[0, 1:-1] = scipy.linalg.solve_banded((1, 1), ab, r)
        return u

    # d = 2: sparse system over the nx*(ny-2) interior unknowns
    nx = grid.nx
    hx2 = grid.hx ** 2
    a_e = 0.5 * (a + np.roll(a, -1, axis=0))
    a_w = np.roll(a_e, 1, axis=0)

    def idx(i, j):
        # j is the interior y-index, 0..m-1, for grid node j+1
        return i * m + j

    rows, cols, vals = [], [], []
    b = np.zeros(nx * m)
    for i in range(nx):
        ip = (i + 1) % nx
        im = (i - 1) % nx
        for j in range(m):
            jj = j + 1
            lo = ah[i, jj - 1] / h2
            hi = ah[i, jj] / h2
            ce = a_e[i, jj] / hx2
            cw = a_w[i, jj] / hx2
            r = idx(i, j)
            rows += [r, r, r]
            cols += [r, idx(ip, j), idx(im, j)]
            vals += [-(lo + hi + ce + cw), ce, cw]
            b[r] = rhs[i, jj]
            if j > 0:
                rows.append(r)
                cols.append(idx(i, j - 1))
                vals.append(lo)
            else:
                b[r] -= lo * b0[i]
            if j < m - 1:
                rows.append(r)
                cols.append(idx(i, j + 1))
                vals.append(hi)
            else:
                b[r] -= hi * b1[i]
    A = scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(nx * m, nx * m))
    sol = scipy.sparse.linalg.splu(A).solve(b)
    u = grid.zeros()
    u[:, 0] = b0
    u[:, -1] = b1
    u[:, 1:-1] = sol.reshape(nx, m)
    return u


# ---------------------------------------------------------------------------
# discrete Leray projection


def _interior_diff_matrix(m: int, h: float) -> np.ndarray:
    """Centered first-difference matrix on interior nodes, zero wall padding."""
    T = np.zeros((m, m))
    c = 1.0 / (2.0 * h)
    for j in range(m - 1):
        T[j, j + 1] = c
        T[j + 1, j] = -c
    return T


def project_div_free(grid: ChannelGrid, u: VelocityField) -> VelocityField:
    """Project onto discretely divergence-free fields with no-slip walls.

    Wall rows are zeroed, then a potential correction is subtracted so
    the centered divergence vanishes at every interior node.  In d = 1
    the only admissible field is zero.  The correction solves the normal
    equations of the interior gradient per tangential mode, so the map
    is an orthogonal projection: idempotent and non-expansive in the
    trapezoid norm.
    """
    if grid.d == 1:
        return VelocityField.zero(grid)

    h = grid.hy
    m = grid.ny - 2
    ux = u.components[0].copy()
    uy = u.components[1].copy()
    for comp in (ux, uy):
        comp[:, 0] = 0.0
        comp[:, -1] = 0.0

    T = _interior_diff_matrix(m, h)
    TtT = T.T @ T

    uxh = np.fft.rfft(ux, axis=0)
    uyh = np.fft.rfft(uy, axis=0)

    # per mode: q minimizes |u - G q|^2 with G = (i kappa I; T); kappa
    # comes from the first-derivative wavenumbers so G matches ddx
    for k, kappa in enumerate(grid.kx_first):
        g = -1j * kappa * uxh[k, 1:-1] + T.T @ uyh[k, 1:-1]
        if kappa == 0.0:
            if m % 2 == 0:
                # T injective, normal matrix SPD
                q = np.linalg.solve(TtT, g)
            else:
                q, *_ = np.linalg.lstsq(TtT.astype(complex), g, rcond=None)
        else:
            A = TtT + (kappa ** 2) * np.eye(m)
            q = np.linalg.solve(A, g)
        uxh[k, 1:-1] -= 1j * kappa * q
        uyh[k, 1:-1] -= T @ q

    ux = np.fft.irfft(uxh, n=grid.nx, axis=0)
    uy = np.fft.irfft(uyh, n=grid.nx, axis=0)
    ux[:, 0] = 0.0
    ux[:, -1] = 0.0
    uy[:, 0] = 0.0
    uy[:, -1] = 0.0
    return VelocityField(grid, [ux, uy])
