"""Classical potential U(x, t) specifications evaluable on any lattice."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grids import SpatialGrid

FORMS = ("free", "constant", "harmonic", "barrier", "tabulated")


@dataclass(frozen=True)
class PotentialSpec:
    """One of: free, constant(c), harmonic(k, x0), barrier(height, left, right),
    tabulated(values per site, optionally per time)."""

    form: str = "free"
    value: float = 0.0            # constant
    spring: float = 1.0           # harmonic k
    center: float = 0.0           # harmonic x0
    height: float = 0.0           # barrier
    left: float = 0.0
    right: float = 0.0
    values: np.ndarray = None     # tabulated, shape (sites,) or (ntimes, sites)
    times: np.ndarray = None      # tabulated time knots when values is 2D

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigurationError(f"unknown potential form {self.form!r}")
        if self.form == "tabulated":
            vals = np.asarray(self.values, dtype=float)
            object.__setattr__(self, "values", vals)
            if vals.ndim == 2:
                if self.times is None:
                    raise ConfigurationError("time-dependent tabulated potential needs times")
                t = np.asarray(self.times, dtype=float)
                if t.shape != (vals.shape[0],):
                    raise ConfigurationError("times length must match tabulated rows")
                object.__setattr__(self, "times", t)
            elif vals.ndim != 1:
                raise ConfigurationError("tabulated values must be 1D or 2D")
            if not np.all(np.isfinite(vals)):
                raise ConfigurationError("tabulated potential contains non-finite values")
        if self.form == "barrier" and self.right < self.left:
            raise ConfigurationError("barrier right edge lies left of its left edge")

    def on_grid(self, grid: SpatialGrid, t: float = 0.0) -> np.ndarray:
        """Potential values at every site of the grid at time t."""
        x = grid.coordinates
        if self.form == "free":
            return np.zeros(grid.sites)
        if self.form == "constant":
            return np.full(grid.sites, float(self.value))
        if self.form == "harmonic":
            return 0.5 * self.spring * (x - self.center) ** 2
        if self.form == "barrier":
            return np.where((x >= self.left) & (x <= self.right), self.height, 0.0)
        vals = self.values
        if vals.ndim == 1:
            if vals.shape[0] != grid.sites:
                raise ConfigurationError(
                    f"tabulated potential has {vals.shape[0]} sites, grid has {grid.sites}")
            return vals.copy()
        if vals.shape[1] != grid.sites:
            raise ConfigurationError(
                f"tabulated potential has {vals.shape[1]} sites, grid has {grid.sites}")
        # linear interpolation in time, clamped at the end knots
        tt = np.clip(t, self.times[0], self.times[-1])
        return np.array([np.interp(tt, self.times, vals[:, j]) for j in range(grid.sites)])

    def is_zero(self) -> bool:
        if self.form == "free":
            return True
        if self.form == "constant":
            return self.value == 0.0
        if self.form == "barrier":
            return self.height == 0.0
        if self.form == "tabulated":
            return bool(np.all(self.values == 0.0))
        return False


def free_potential() -> PotentialSpec:
    return PotentialSpec(form="free")


def constant_potential(c: float) -> PotentialSpec:
    return PotentialSpec(form="constant", value=c)


def harmonic_potential(k: float, x0: float = 0.0) -> PotentialSpec:
    return PotentialSpec(form="harmonic", spring=k, center=x0)


def barrier_potential(height: float, left: float, right: float) -> PotentialSpec:
    return PotentialSpec(form="barrier", height=height, left=left, right=right)


def tabulated_potential(values, times=None) -> PotentialSpec:
    return PotentialSpec(form="tabulated", values=np.asarray(values, float),
                         times=None if times is None else np.asarray(times, float))
