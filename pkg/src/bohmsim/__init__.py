"""Bohmian trajectory simulator with a second-quantized correction layer.

A lattice-regularized wave functional evolves over the configuration space of
a 1D field; its magnitude feeds a correction density whose field-space
derivatives modify the first-quantized propagator, the quantum potential, and
the continuity equation.  Trajectory ensembles and identity checks probe the
resulting dynamics.
"""

__version__ = "0.1.0"

from .errors import (BohmsimError, ConfigurationError, DegenerateFieldError,
                     NumericalBlowupError, OutOfBoxError)
from .grids import (LatticeField, PhysicsParams, SpatialGrid,
                    build_spatial_grid, gradient, laplacian, norm_squared)
from .polar import (PolarField, from_polar, standard_quantum_potential,
                    to_polar, velocity_field)
from .potentials import PotentialSpec

__all__ = [
    "BohmsimError", "ConfigurationError", "DegenerateFieldError",
    "NumericalBlowupError", "OutOfBoxError",
    "LatticeField", "PhysicsParams", "SpatialGrid",
    "build_spatial_grid", "gradient", "laplacian", "norm_squared",
    "PolarField", "from_polar", "standard_quantum_potential", "to_polar",
    "velocity_field", "PotentialSpec",
]
