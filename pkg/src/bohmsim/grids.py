"""Spatial lattice, differential operators, and the complex field container.

All physics modules share the same 1D grid abstraction.  Periodic grids use
spectral (FFT) derivatives; Dirichlet grids use second-order central
differences with zero ghost cells outside the domain.  On periodic grids the
first-derivative multiplier zeroes the Nyquist mode, and the Laplacian is
defined as the square of that multiplier so that applying the gradient twice
reproduces the Laplacian exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
_BOUNDARIES = (PERIODIC, DIRICHLET)


@dataclass(frozen=True)
class PhysicsParams:
    """Action scale and mass; natural units hbar = m = 1 by default."""

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0):
            raise ConfigurationError(f"hbar must be positive, got {self.hbar}")
        if not (self.mass > 0):
            raise ConfigurationError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform 1D lattice: x_j = origin + j*spacing for j in [0, sites)."""

    sites: int
    spacing: float
    origin: float = 0.0
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.sites < 1:
            raise ConfigurationError(f"grid needs at least one site, got {self.sites}")
        if not (self.spacing > 0):
            raise ConfigurationError(f"grid spacing must be positive, got {self.spacing}")
        if self.boundary not in _BOUNDARIES:
            raise ConfigurationError(
                f"boundary must be one of {_BOUNDARIES}, got {self.boundary!r}")

    @property
    def coordinates(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.sites)

    @property
    def extent(self) -> float:
        return self.sites * self.spacing

    def wavenumbers(self) -> np.ndarray:
        """Reciprocal-lattice wavenumbers 2*pi*fftfreq (periodic grids)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.sites, d=self.spacing)


@dataclass
class LatticeField:
    """Complex amplitudes on a SpatialGrid."""

    grid: SpatialGrid
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.sites,):
            raise ConfigurationError(
                f"field has {self.values.shape} values for a {self.grid.sites}-site grid")

    def require_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("field contains non-finite values")
        return self

    def copy(self) -> "LatticeField":
        return LatticeField(self.grid, self.values.copy())


def build_spatial_grid(sites: int, spacing: float, origin: float = 0.0,
                       boundary: str = PERIODIC) -> SpatialGrid:
    """Validated SpatialGrid constructor."""
    return SpatialGrid(sites=sites, spacing=spacing, origin=origin, boundary=boundary)


def _first_derivative_multiplier(grid: SpatialGrid) -> np.ndarray:
    k = grid.wavenumbers()
    mult = 1j * k
    if grid.sites % 2 == 0:
        # odd derivative of the Nyquist mode is ambiguous; zero it
        mult[grid.sites // 2] = 0.0
    return mult


def gradient(fld: LatticeField) -> LatticeField:
    """First spatial derivative (spectral on periodic, central FD on dirichlet)."""
    grid, f = fld.grid, fld.values
    if grid.boundary == PERIODIC:
        out = np.fft.ifft(_first_derivative_multiplier(grid) * np.fft.fft(f))
    else:
        padded = np.concatenate(([0.0], f, [0.0]))
        out = (padded[2:] - padded[:-2]) / (2.0 * grid.spacing)
    return LatticeField(grid, out)


def laplacian(fld: LatticeField) -> LatticeField:
    """Second spatial derivative, same discretization policy as gradient."""
    grid, f = fld.grid, fld.values
    if grid.boundary == PERIODIC:
        mult = _first_derivative_multiplier(grid) ** 2
        out = np.fft.ifft(mult * np.fft.fft(f))
    else:
        padded = np.concatenate(([0.0], f, [0.0]))
        out = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / grid.spacing ** 2
    return LatticeField(grid, out)


def integrate_sites(grid: SpatialGrid, values: np.ndarray):
    """Lattice-regularized spatial integral: sum over sites times spacing."""
    return grid.spacing * np.sum(values)


def norm_squared(fld: LatticeField) -> float:
    """Discrete L2 norm squared: sum_j a*|psi_j|^2."""
    return float(fld.grid.spacing * np.sum(np.abs(fld.values) ** 2))
