"""Differential operators, quadrature, and norms on the channel grid.

Tangential derivatives are spectral (rfft), wall-normal derivatives are
second-order finite differences with one-sided stencils at the walls.
All operators take and return plain (nx, ny) arrays; the grid object
carries the geometry.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse

from .grid import ChannelGrid, VelocityField

__all__ = [
    "ddx",
    "d2dx2",
    "ddy",
    "d2dy2",
    "laplacian",
    "grad",
    "divergence",
    "advect",
    "quad_weights",
    "integrate",
    "norm_l2",
    "norm_h1_semi",
    "norm_h2",
    "norm_linf",
    "norms",
    "half_node_average_y",
    "div_a_grad",
    "BandedMatrix",
]


# ---------------------------------------------------------------------------
# tangential (spectral) derivatives


def ddx(grid: ChannelGrid, f: np.ndarray) -> np.ndarray:
    """First tangential derivative; identically zero in d = 1.

    Uses the Nyquist-zeroed wavenumbers so the operator is skew-adjoint
    on the real grid.
    """
    if grid.nx == 1:
        return np.zeros_like(f)
    fh = np.fft.rfft(f, axis=0)
    fh *= 1j * grid.kx_first[:, None]
    return np.fft.irfft(fh, n=grid.nx, axis=0)


def d2dx2(grid: ChannelGrid, f: np.ndarray) -> np.ndarray:
    """Second tangential derivative; identically zero in d = 1."""
    if grid.nx == 1:
        return np.zeros_like(f)
    fh = np.fft.rfft(f, axis=0)
    fh *= -(grid.kx[:, None] ** 2)
    return np.fft.irfft(fh, n=grid.nx, axis=0)


# ---------------------------------------------------------------------------
# wall-normal (finite difference) derivatives


def ddy(grid: ChannelGrid, f: np.ndarray) -> np.ndarray:
    """First wall-normal derivative, one-sided second order at the walls."""
    h = grid.hy
    out = np.empty_like(f)
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * h)
    out[:, 0] = (-3.0 * f[:, 0] + 4.0 * f[:, 1] - f[:, 2]) / (2.0 * h)
    out[:, -1] = (3.0 * f[:, -1] - 4.0 * f[:, -2] + f[:, -3]) / (2.0 * h)
    return out


def d2dy2(grid: ChannelGrid, f: np.ndarray) -> np.ndarray:
    """Second wall-normal derivative, one-sided second order at the walls."""
    h2 = grid.hy ** 2
    out = np.empty_like(f)
    out[:, 1:-1] = (f[:, 2:] - 2.0 * f[:, 1:-1] + f[:, :-2]) / h2
    out[:, 0] = (2.0 * f[:, 0] - 5.0 * f[:, 1] + 4.0 * f[:, 2] - f[:, 3]) / h2
    out[:, -1] = (2.0 * f[:, -1] - 5.0 * f[:, -2] + 4.0 * f[:, -3] - f[:, -4]) / h2
    return out


def laplacian(grid: ChannelGrid, f: np.ndarray) -> np.ndarray:
    return d2dx2(grid, f) + d2dy2(grid, f)


def grad(grid: ChannelGrid, f: np.ndarray) -> list[np.ndarray]:
    """Gradient components; [ddy] in d = 1, [ddx, ddy] in d = 2."""
    if grid.d == 1:
        return [ddy(grid, f)]
    return [ddx(grid, f), ddy(grid, f)]


def divergence(grid: ChannelGrid, components) -> np.ndarray:
    """Divergence of a vector sample (VelocityField or list of arrays)."""
    if isinstance(components, VelocityField):
        components = components.components
    if len(components) != grid.d:
        raise ValueError(f"need {grid.d} components, got {len(components)}")
    if grid.d == 1:
        return ddy(grid, components[0])
    return ddx(grid, components[0]) + ddy(grid, components[1])


def advect(grid: ChannelGrid, u: VelocityField, f: np.ndarray) -> np.ndarray:
    """Advective derivative u . grad f."""
    gf = grad(grid, f)
    out = np.zeros_like(f)
    for comp, df in zip(u.components, gf):
        out += comp * df
    return out


# ---------------------------------------------------------------------------
# quadrature and norms


def quad_weights(grid: ChannelGrid) -> np.ndarray:
    """Quadrature weights, trapezoid in y and uniform in x, shape (nx, ny)."""
    wy = np.full(grid.ny, grid.hy)
    wy[0] *= 0.5
    wy[-1] *= 0.5
    wx = np.full(grid.nx, grid.hx)
    return wx[:, None] * wy[None, :]


def integrate(grid: ChannelGrid, f: np.ndarray) -> float:
    return float(np.sum(quad_weights(grid) * f))


def norm_l2(grid: ChannelGrid, f: np.ndarray) -> float:
    return float(np.sqrt(max(integrate(grid, f * f), 0.0)))


def norm_h1_semi(grid: ChannelGrid, f: np.ndarray) -> float:
    s = 0.0
    for df in grad(grid, f):
        s += integrate(grid, df * df)
    return float(np.sqrt(max(s, 0.0)))


def norm_h2(grid: ChannelGrid, f: np.ndarray) -> float:
    """Full H^2 norm.

    Sums the squared L^2 norms of the function, its first derivatives,
    and its second derivatives; the mixed derivative is counted twice
    so the seminorm is symmetric in the two index orders.
    """
    s = integrate(grid, f * f)
    for df in grad(grid, f):
        s += integrate(grid, df * df)
    fyy = d2dy2(grid, f)
    s += integrate(grid, fyy * fyy)
    if grid.d == 2:
        fxx = d2dx2(grid, f)
        fxy = ddy(grid, ddx(grid, f))
        s += integrate(grid, fxx * fxx) + 2.0 * integrate(grid, fxy * fxy)
    return float(np.sqrt(max(s, 0.0)))


def norm_linf(grid: ChannelGrid, f: np.ndarray) -> float:
    return float(np.max(np.abs(f)))


def norms(grid: ChannelGrid, f) -> dict[str, float]:
    """Norm bundle for a scalar array or a VelocityField.

    Vector norms sum the squared component norms (max over components
    for linf), so they agree with treating the field as one L^2 object.
    """
    if isinstance(f, VelocityField):
        comps = f.components
        sq = {"l2": 0.0, "h1_semi": 0.0, "h2": 0.0}
        linf = 0.0
        for c in comps:
            n = norms(grid, c)
            for key in sq:
                sq[key] += n[key] ** 2
            linf = max(linf, n["linf"])
        out = {key: float(np.sqrt(val)) for key, val in sq.items()}
        out["linf"] = linf
        return out
    return {
        "l2": norm_l2(grid, f),
        "h1_semi": norm_h1_semi(grid, f),
        "h2": norm_h2(grid, f),
        "linf": norm_linf(grid, f),
    }


# ---------------------------------------------------------------------------
# conservative variable-coefficient operators


def half_node_average_y(a: np.ndarray) -> np.ndarray:
    """Arithmetic average of a at the y half nodes, shape (nx, ny-1)."""
    return 0.5 * (a[:, 1:] + a[:, :-1])


def div_a_grad(grid: ChannelGrid, a: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Conservative discretization of div(a grad f) on interior nodes.

    Fluxes live at half nodes with arithmetically averaged coefficients;
    the tangential part in d = 2 uses the same construction with periodic
    wraparound.  Wall rows are zero: the stencil is defined only where
    both neighboring fluxes exist, and callers impose wall conditions
    separately.
    """
    h = grid.hy
    out = np.zeros_like(f)
    ah = half_node_average_y(a)
    flux = ah * (f[:, 1:] - f[:, :-1]) / h
    out[:, 1:-1] = (flux[:, 1:] - flux[:, :-1]) / h
    if grid.d == 2 and grid.nx > 1:
        hx = grid.hx
        a_e = 0.5 * (a + np.roll(a, -1, axis=0))
        flux_x = a_e * (np.roll(f, -1, axis=0) - f) / hx
        out[:, 1:-1] += (flux_x[:, 1:-1] - np.roll(flux_x, 1, axis=0)[:, 1:-1]) / hx
    return out


# ---------------------------------------------------------------------------
# banded matrix helper


class BandedMatrix:
    """Small wrapper for real banded systems in scipy's (l, u) storage.

    Built from a dict mapping offsets to diagonals; offset +k is the
    k-th superdiagonal.  Diagonals may be given at full length n (the
    out-of-band entries are ignored) or at the exact band length n-|k|.
    """

    def __init__(self, n: int, diags: dict[int, np.ndarray]):
        self.n = n
        self.l = max(-min(diags.keys()), 0)
        self.u = max(max(diags.keys()), 0)
        self.ab = np.zeros((self.l + self.u + 1, n))
        for k, diag in diags.items():
            diag = np.asarray(diag, dtype=float)
            m = n - abs(k)
            if diag.shape == (n,):
                diag = diag[:m] if k >= 0 else diag[-m:]
            if diag.shape != (m,):
                raise ValueError(f"diagonal {k} must have length {m} or {n}, got {diag.shape}")
            row = self.u - k
            if k >= 0:
                self.ab[row, k:] = diag
            else:
                self.ab[row, : n + k] = diag

    def to_sparse(self) -> scipy.sparse.dia_matrix:
        offsets = np.arange(self.u, -self.l - 1, -1)
        data = np.zeros((len(offsets), self.n))
        for i, k in enumerate(offsets):
            if k >= 0:
                data[i, k:] = self.ab[self.u - k, k:]
            else:
                data[i, : self.n + k] = self.ab[self.u - k, : self.n + k]
        return scipy.sparse.dia_matrix((data, offsets), shape=(self.n, self.n))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_sparse() @ x

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.solve_banded((self.l, self.u), self.ab, rhs)
