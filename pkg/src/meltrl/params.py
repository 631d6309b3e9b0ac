"""Process, material and discretization parameters shared by all modules.

Length convention: user-facing coordinates are micrometres, internal
physics (diffusivity, velocities, time) is SI.  The grid is cell-centered:
cell (i, j, k) is sampled at ((i + 1/2) dx, (j + 1/2) dx, (k + 1/2) dx) so
the domain faces lie exactly on the planes x = 0, x = nx*dx, etc., and
z = 0 is the free surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UM = 1e-6  # micrometres -> metres


@dataclass(frozen=True)
class MaterialParams:
    """Thermal material properties of the powder bed continuum.

    Attributes
    ----------
    absorptivity : float
        Fraction of laser power absorbed (0 < A <= 1).
    conductivity : float
        Thermal conductivity k (W/m/K).
    heat_capacity : float
        Specific heat c_p (J/kg/K).
    density : float
        Density rho (kg/m^3).
    melt_temp : float
        Melting temperature (K).
    ambient_temp : float
        Initial/reference temperature T0 (K).
    """

    absorptivity: float = 0.3
    conductivity: float = 21.5
    heat_capacity: float = 505.0
    density: float = 7910.0
    melt_temp: float = 1673.0
    ambient_temp: float = 300.0

    def __post_init__(self):
        if not (0.0 < self.absorptivity <= 1.0):
            raise ValueError(f"absorptivity must be in (0, 1], got {self.absorptivity}")
        for name in ("conductivity", "heat_capacity", "density", "melt_temp", "ambient_temp"):
            v = getattr(self, name)
            if not v > 0.0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if not self.melt_temp > self.ambient_temp:
            raise ValueError("melt_temp must exceed ambient_temp")

    @property
    def diffusivity(self) -> float:
        """Thermal diffusivity D = k / (rho * c_p), in m^2/s."""
        return self.conductivity / (self.density * self.heat_capacity)


def thermal_diffusivity(m: MaterialParams) -> float:
    """D = k / (rho * c_p) in m^2/s."""
    return m.diffusivity


@dataclass(frozen=True)
class LaserParams:
    """Gaussian surface heat source: power P (W) and beam sigma (um)."""

    power: float = 150.0
    beam_sigma_um: float = 13.75

    def __post_init__(self):
        if self.power < 0.0:
            raise ValueError(f"power must be >= 0, got {self.power}")
        if not self.beam_sigma_um > 0.0:
            raise ValueError(f"beam_sigma_um must be > 0, got {self.beam_sigma_um}")

    @property
    def sigma_m(self) -> float:
        return self.beam_sigma_um * UM


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centered grid over the build domain.

    ``origin_um`` is the coordinate of the center of cell (0, 0, 0); the
    default half-cell offset puts the domain faces at 0 and n*dx.  z grows
    downward into the material and z = 0 is the top (free) surface.
    """

    dx_um: float = 20.0
    nx: int = 63
    ny: int = 63
    nz: int = 16
    origin_um: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not self.dx_um > 0.0:
            raise ValueError(f"dx_um must be > 0, got {self.dx_um}")
        for name in ("nx", "ny", "nz"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if self.origin_um is None:
            h = 0.5 * self.dx_um
            object.__setattr__(self, "origin_um", (h, h, h))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def extent_um(self) -> tuple[float, float, float]:
        """Domain side lengths (face-to-face), in um."""
        return (self.nx * self.dx_um, self.ny * self.dx_um, self.nz * self.dx_um)

    def x_coords_um(self) -> np.ndarray:
        return self.origin_um[0] + self.dx_um * np.arange(self.nx)

    def y_coords_um(self) -> np.ndarray:
        return self.origin_um[1] + self.dx_um * np.arange(self.ny)

    def z_coords_um(self) -> np.ndarray:
        return self.origin_um[2] + self.dx_um * np.arange(self.nz)

    def cell_of(self, x_um: float, y_um: float) -> tuple[int, int]:
        """Index of the cell whose footprint contains (x, y), clipped to the grid."""
        i = int(np.floor((x_um - self.origin_um[0]) / self.dx_um + 0.5))
        j = int(np.floor((y_um - self.origin_um[1]) / self.dx_um + 0.5))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1))


ADIABATIC = "adiabatic"
FIXED = "fixed"


@dataclass(frozen=True)
class FaceRule:
    """Boundary rule for one domain face: insulated or held at a temperature."""

    kind: str = ADIABATIC
    temp: float = 0.0

    def __post_init__(self):
        if self.kind not in (ADIABATIC, FIXED):
            raise ValueError(f"unknown face rule {self.kind!r}")
        if self.kind == FIXED and self.temp < 0.0:
            raise ValueError("fixed-temperature face requires temp >= 0 K")


def adiabatic() -> FaceRule:
    return FaceRule(ADIABATIC)


def fixed(temp: float) -> FaceRule:
    return FaceRule(FIXED, temp)


@dataclass(frozen=True)
class BoundaryCondition:
    """Rules for the four lateral faces and the bottom; the top is always adiabatic."""

    x_lo: FaceRule = field(default_factory=adiabatic)
    x_hi: FaceRule = field(default_factory=adiabatic)
    y_lo: FaceRule = field(default_factory=adiabatic)
    y_hi: FaceRule = field(default_factory=adiabatic)
    bottom: FaceRule = field(default_factory=adiabatic)

    def face(self, axis: int, side: int) -> FaceRule:
        """Rule for (axis, side); axis 2 side 0 is the top face (always adiabatic)."""
        if axis == 0:
            return self.x_lo if side == 0 else self.x_hi
        if axis == 1:
            return self.y_lo if side == 0 else self.y_hi
        return FaceRule(ADIABATIC) if side == 0 else self.bottom


def all_adiabatic() -> BoundaryCondition:
    return BoundaryCondition()
