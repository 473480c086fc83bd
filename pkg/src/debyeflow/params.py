"""Physical parameters and wall data for the channel electrokinetics problem.

Two ionic species with valences of opposite sign move in a fluid slab
between two reservoir walls.  The wall traces of the concentrations are
required to carry zero net charge so that the charge density vanishes on
the boundary; that compatibility is what makes the small-Debye-length
regime non-singular at the walls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Params", "BoundaryData"]


@dataclass
class Params:
    """Physical constants of the scaled two-species transport-flow system.

    Parameters
    ----------
    z1, z2 : float
        Valences, with z1 > 0 > z2.
    D1, D2 : float
        Diffusivities, D1 >= D2 > 0.
    nu : float
        Kinematic viscosity of the solvent.
    eps : float
        Scaled Debye length.
    c_lower, c_upper : float
        Envelope of admissible concentrations: the min/max over the wall
        traces and the initial data of both species.  Used by maximum
        principle checks and by ellipticity guards.
    K : float
        Electro-coupling constant, fixed to 1 in this scaling.
    """

    z1: float
    z2: float
    D1: float
    D2: float
    nu: float
    eps: float
    c_lower: float = 1.0
    c_upper: float = 1.0
    K: float = 1.0

    def __post_init__(self) -> None:
        if not (self.z1 > 0.0 > self.z2):
            raise ValueError(f"valences must satisfy z1 > 0 > z2, got z1={self.z1}, z2={self.z2}")
        if not (self.D1 >= self.D2 > 0.0):
            raise ValueError(f"diffusivities must satisfy D1 >= D2 > 0, got D1={self.D1}, D2={self.D2}")
        if self.nu <= 0.0:
            raise ValueError(f"viscosity must be positive, got nu={self.nu}")
        if self.eps <= 0.0:
            raise ValueError(f"Debye length must be positive, got eps={self.eps}")
        if not (0.0 < self.c_lower <= self.c_upper):
            raise ValueError(
                f"data bounds must satisfy 0 < c_lower <= c_upper, "
                f"got c_lower={self.c_lower}, c_upper={self.c_upper}"
            )
        if self.K != 1.0:
            raise ValueError(f"coupling constant is fixed to 1 in this scaling, got K={self.K}")

    @property
    def D_star(self) -> float:
        """Smaller of the two diffusivities; the dissipation floor."""
        return min(self.D1, self.D2)

    def z(self, species: int) -> float:
        return {1: self.z1, 2: self.z2}[species]

    def D(self, species: int) -> float:
        return {1: self.D1, 2: self.D2}[species]


@dataclass
class BoundaryData:
    """Wall traces of the concentrations and of the electric potential.

    Each trace is an array of shape (2, nx): row 0 is the wall y = 0,
    row 1 the wall y = 1, sampled at the periodic x nodes.  The
    concentration traces must be positive and carry zero net charge,
    z1*gamma1 + z2*gamma2 = 0 pointwise.
    """

    gamma1: np.ndarray
    gamma2: np.ndarray
    w: np.ndarray
    _z1: float = field(default=0.0, repr=False)
    _z2: float = field(default=0.0, repr=False)

    def __post_init__(self) -> None:
        self.gamma1 = np.atleast_2d(np.asarray(self.gamma1, dtype=float))
        self.gamma2 = np.atleast_2d(np.asarray(self.gamma2, dtype=float))
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        for name, trace in (("gamma1", self.gamma1), ("gamma2", self.gamma2), ("w", self.w)):
            if trace.shape[0] != 2:
                raise ValueError(f"{name} trace must have shape (2, nx), got {trace.shape}")
            if not np.all(np.isfinite(trace)):
                raise ValueError(f"{name} trace contains non-finite values")
        if np.any(self.gamma1 <= 0.0) or np.any(self.gamma2 <= 0.0):
            raise ValueError("concentration traces must be positive")

    @classmethod
    def electroneutral(
        cls,
        gamma1: np.ndarray,
        w: np.ndarray,
        params: Params,
    ) -> "BoundaryData":
        """Build wall data with gamma2 derived from the zero-net-charge condition."""
        gamma1 = np.atleast_2d(np.asarray(gamma1, dtype=float))
        gamma2 = -params.z1 * gamma1 / params.z2
        return cls(gamma1=gamma1, gamma2=gamma2, w=np.atleast_2d(np.asarray(w, dtype=float)),
                   _z1=params.z1, _z2=params.z2)

    def gamma(self, species: int) -> np.ndarray:
        return {1: self.gamma1, 2: self.gamma2}[species]

    def charge_defect(self, params: Params) -> float:
        """Max pointwise violation of z1*gamma1 + z2*gamma2 = 0 on the walls."""
        return float(np.max(np.abs(params.z1 * self.gamma1 + params.z2 * self.gamma2)))
