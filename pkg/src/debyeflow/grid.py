"""Grid and field containers for the periodic channel.

The domain is T^{d-1} x (0, 1): periodic in the tangential directions,
a unit interval with walls in the last coordinate.  We only implement
d = 1 (no tangential direction, nx = 1) and d = 2 (one periodic
tangential coordinate).  Fields always carry shape (nx, ny) so the same
code paths serve both dimensions; for d = 1 the x-axis is a singleton.

Discretization: Fourier collocation in x (uniform nodes, period 1),
second-order centered finite differences in y on ny nodes including
both walls, hy = 1/(ny - 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ChannelGrid", "ScalarField", "VelocityField", "State"]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ChannelGrid:
    """Tensor grid on the periodic channel.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 or 2.
    nx : int
        Number of periodic collocation nodes; must be 1 when d = 1 and a
        power of two when d = 2 (keeps the rfft layout simple).
    ny : int
        Number of wall-normal nodes including both walls, at least 8.
    """

    d: int
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got d={self.d}")
        if self.d == 1 and self.nx != 1:
            raise ValueError(f"d=1 requires nx=1, got nx={self.nx}")
        if self.d == 2 and not (_is_power_of_two(self.nx) and self.nx >= 4):
            raise ValueError(f"d=2 requires nx a power of two >= 4, got nx={self.nx}")
        if self.ny < 8:
            raise ValueError(f"need at least 8 wall-normal nodes, got ny={self.ny}")

    @property
    def hy(self) -> float:
        return 1.0 / (self.ny - 1)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def x(self) -> np.ndarray:
        """Periodic nodes in [0, 1), shape (nx,)."""
        return np.arange(self.nx) / self.nx

    @property
    def y(self) -> np.ndarray:
        """Wall-normal nodes in [0, 1], shape (ny,)."""
        return np.linspace(0.0, 1.0, self.ny)

    @property
    def xx(self) -> np.ndarray:
        return np.broadcast_to(self.x[:, None], self.shape)

    @property
    def yy(self) -> np.ndarray:
        return np.broadcast_to(self.y[None, :], self.shape)

    @property
    def kx(self) -> np.ndarray:
        """Angular wavenumbers 2*pi*k for the rfft modes, shape (nx//2 + 1,)."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.nx, d=self.hx)

    @property
    def kx_first(self) -> np.ndarray:
        """Wavenumbers for first derivatives: Nyquist bin zeroed.

        On an even real grid the Nyquist mode has no representable odd
        derivative (irfft drops the imaginary part), so every operator
        that differentiates once must use this array or gradients and
        divergences stop being adjoint to each other.
        """
        k = self.kx.copy()
        if self.nx > 1 and self.nx % 2 == 0:
            k[-1] = 0.0
        return k

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def field_from_y(self, fy: np.ndarray) -> np.ndarray:
        """Broadcast a y-profile of shape (ny,) to a full field."""
        fy = np.asarray(fy, dtype=float)
        if fy.shape != (self.ny,):
            raise ValueError(f"profile must have shape ({self.ny},), got {fy.shape}")
        return np.tile(fy[None, :], (self.nx, 1))


@dataclass
class ScalarField:
    """A scalar sample on the grid, shape (nx, ny)."""

    grid: ChannelGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VelocityField:
    """Velocity sample with one component per spatial dimension.

    components[j] has shape (nx, ny); the last component is always the
    wall-normal one.  For d = 1 there is a single component.
    """

    grid: ChannelGrid
    components: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.components) != self.grid.d:
            raise ValueError(
                f"need {self.grid.d} components for d={self.grid.d}, got {len(self.components)}"
            )
        self.components = [np.asarray(c, dtype=float) for c in self.components]
        for j, c in enumerate(self.components):
            if c.shape != self.grid.shape:
                raise ValueError(f"component {j} shape {c.shape} != grid {self.grid.shape}")

    @classmethod
    def zero(cls, grid: ChannelGrid) -> "VelocityField":
        return cls(grid, [grid.zeros() for _ in range(grid.d)])

    @property
    def normal(self) -> np.ndarray:
        """Wall-normal component."""
        return self.components[-1]

    def copy(self) -> "VelocityField":
        return VelocityField(self.grid, [c.copy() for c in self.components])


@dataclass
class State:
    """Snapshot of the coupled system at one time."""

    t: float
    c1: np.ndarray
    c2: np.ndarray
    u: VelocityField
    psi: np.ndarray
    p: np.ndarray | None = None

    def copy(self) -> "State":
        return State(
            t=self.t,
            c1=self.c1.copy(),
            c2=self.c2.copy(),
            u=self.u.copy(),
            psi=self.psi.copy(),
            p=None if self.p is None else self.p.copy(),
        )

    def rho(self, params) -> np.ndarray:
        """Charge density z1*c1 + z2*c2."""
        return params.z1 * self.c1 + params.z2 * self.c2
