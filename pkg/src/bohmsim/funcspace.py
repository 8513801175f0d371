"""Discretized field-configuration space and the wave functional living on it.

Each lattice site j contributes a complex coordinate psi_j = q_j + i*p_j, so a
lattice with M sites yields a 2M-dimensional box [-L, L)^{2M} with n points per
axis (axis 2j holds q_j, axis 2j+1 holds p_j).  Functional derivatives follow
the finite-volume rule delta/delta psi(x_j) -> (1/a) d/d psi_j with exact
Wirtinger factors:

    d/d psi_j      = (d/dq_j - i d/dp_j) / 2
    d/d psi_j^*    = (d/dq_j + i d/dp_j) / 2
    d^2/dpsi dpsi* = (d^2/dq_j^2 + d^2/dp_j^2) / 4

Grid derivatives are second-order central differences, one-sided at the box
edges.  The normalization measure is prod_j h^2 per configuration point.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, OutOfBoxError
from .grids import LatticeField, SpatialGrid

POINT_CAP_DEFAULT = 2 ** 24
FUNCTIONAL_NODE_REL = 1e-10

WRT_PSI = "wrt_psi"
WRT_PSI_STAR = "wrt_psi_star"
MIXED_SECOND = "mixed_second"


@dataclass(frozen=True)
class ConfigGrid:
    """Tensor-product grid over the (q_j, p_j) planes of every lattice site."""

    lattice: SpatialGrid
    half_width: float
    points: int
    point_cap: int = POINT_CAP_DEFAULT

    @property
    def ndim(self) -> int:
        return 2 * self.lattice.sites

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def shape(self):
        return (self.points,) * self.ndim

    @property
    def cell_measure(self) -> float:
        """Integration weight per configuration point: prod_j h^2."""
        return self.spacing ** self.ndim

    def axis_coordinates(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)

    def axis_mesh(self, axis: int) -> np.ndarray:
        """Axis coordinates shaped for broadcasting against grid arrays."""
        shape = [1] * self.ndim
        shape[axis] = self.points
        return self.axis_coordinates().reshape(shape)

    def site_complex(self, site: int) -> np.ndarray:
        """Broadcastable q_j + i*p_j over the grid."""
        return self.axis_mesh(2 * site) + 1j * self.axis_mesh(2 * site + 1)


def build_config_grid(lattice: SpatialGrid, half_width: float, points: int,
                      point_cap: int = POINT_CAP_DEFAULT) -> ConfigGrid:
    if points < 8 or points % 2 != 0:
        raise ConfigurationError(
            f"points per configuration axis must be even and >= 8, got {points}")
    if not (half_width > 0):
        raise ConfigurationError(f"box half-width must be positive, got {half_width}")
    total = points ** (2 * lattice.sites)
    if total > point_cap:
        raise ConfigurationError(
            f"configuration grid would hold {points}^{2 * lattice.sites} = {total} "
            f"points, exceeding the cap of {point_cap}")
    return ConfigGrid(lattice=lattice, half_width=half_width, points=points,
                      point_cap=point_cap)


@dataclass
class WaveFunctional:
    """Complex amplitude over a ConfigGrid; normalized to 1 in the h^2 measure."""

    domain: ConfigGrid
    values: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.domain.cell_measure))

    def normalized(self) -> "WaveFunctional":
        return WaveFunctional(self.domain, self.values / self.norm())

    def edge_max_abs(self) -> float:
        """Largest |Psi| on any boundary hyperplane of the box."""
        worst = 0.0
        for axis in range(self.domain.ndim):
            for edge in (0, -1):
                sl = [slice(None)] * self.domain.ndim
                sl[axis] = edge
                worst = max(worst, float(np.max(np.abs(self.values[tuple(sl)]))))
        return worst


@dataclass
class FunctionalPolar:
    """Pointwise magnitude/phase split of a wave functional (no global unwrap)."""

    domain: ConfigGrid
    magnitude: np.ndarray
    phase: np.ndarray
    flagged: np.ndarray

    def __post_init__(self):
        # derivative grids of the magnitude are pure functions of it; memoized
        # because the coupling layer re-reads them every propagator stage
        self._derivative_cache = {}

    @property
    def node_threshold(self) -> float:
        return FUNCTIONAL_NODE_REL * float(np.max(self.magnitude))


def init_wave_functional(domain: ConfigGrid, center, width: float) -> WaveFunctional:
    """Normalized Gaussian centered on a field configuration.

    center may be a LatticeField over domain.lattice or a complex sequence of
    length M.  Warns when the 4-sigma ball does not fit inside the box.
    """
    if width <= 0:
        raise ConfigurationError(f"functional width must be positive, got {width}")
    center = _config_values(domain, center)
    for j, c in enumerate(center):
        if max(abs(c.real), abs(c.imag)) + 4.0 * width >= domain.half_width:
            warnings.warn(
                f"functional center {c} at site {j} leaves less than 4 widths of "
                f"margin inside the box (half-width {domain.half_width})",
                stacklevel=2)
    expo = np.zeros(domain.shape)
    for j, c in enumerate(center):
        q = domain.axis_mesh(2 * j)
        p = domain.axis_mesh(2 * j + 1)
        expo = expo + (q - c.real) ** 2 + (p - c.imag) ** 2
    psi = np.exp(-expo / (2.0 * width ** 2)).astype(complex)
    return WaveFunctional(domain, psi).normalized()


def _axis_first(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return np.gradient(f, h, axis=axis, edge_order=2)


def _axis_second(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
    out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
    return np.moveaxis(out, 0, axis) / h ** 2


def functional_derivative(domain: ConfigGrid, f: np.ndarray, site: int,
                          kind: str) -> np.ndarray:
    """Lattice-regularized functional derivative of a grid function.

    kind selects d/dpsi, d/dpsi* or the mixed second derivative at the given
    lattice site; the 1/a (resp. 1/a^2) regularization factor is included.
    """
    if not (0 <= site < domain.lattice.sites):
        raise IndexError(f"site {site} out of range for {domain.lattice.sites}-site lattice")
    f = np.asarray(f)
    if f.shape != domain.shape:
        raise ConfigurationError(f"grid function shape {f.shape} != domain shape {domain.shape}")
    a = domain.lattice.spacing
    h = domain.spacing
    qax, pax = 2 * site, 2 * site + 1
    if kind == WRT_PSI:
        return 0.5 * (_axis_first(f, qax, h) - 1j * _axis_first(f, pax, h)) / a
    if kind == WRT_PSI_STAR:
        return 0.5 * (_axis_first(f, qax, h) + 1j * _axis_first(f, pax, h)) / a
    if kind == MIXED_SECOND:
        return 0.25 * (_axis_second(f, qax, h) + _axis_second(f, pax, h)) / a ** 2
    raise ConfigurationError(f"unknown derivative kind {kind!r}")


def _config_values(domain: ConfigGrid, config) -> np.ndarray:
    if isinstance(config, LatticeField):
        vals = config.values
    else:
        vals = np.asarray(config, dtype=complex)
    vals = np.atleast_1d(vals)
    if vals.shape[-1] != domain.lattice.sites:
        raise ConfigurationError(
            f"configuration has {vals.shape[-1]} sites, domain lattice has "
            f"{domain.lattice.sites}")
    return vals


def evaluate_functional_at(domain: ConfigGrid, values: np.ndarray, config):
    """Multilinear interpolation of a grid function at field configuration(s).

    config: LatticeField, complex sequence of length M, or batch array (B, M).
    Returns a scalar for a single configuration, an array of length B for a
    batch.  Points outside the representable box raise OutOfBoxError.
    """
    vals = _config_values(domain, config)
    single = vals.ndim == 1
    batch = vals.reshape(-1, domain.lattice.sites)
    ndim = domain.ndim
    coords = np.empty((batch.shape[0], ndim))
    coords[:, 0::2] = batch.real
    coords[:, 1::2] = batch.imag

    h = domain.spacing
    t = (coords + domain.half_width) / h
    upper = domain.points - 1
    bad = (t < 0) | (t > upper)
    if np.any(bad):
        b, d = np.argwhere(bad)[0]
        raise OutOfBoxError(site=d // 2, value=batch[b, d // 2],
                            half_width=domain.half_width,
                            hint="increase the configuration box half-width")
    i0 = np.minimum(t.astype(int), upper - 1)
    frac = t - i0

    out = np.zeros(batch.shape[0], dtype=values.dtype)
    for corner in itertools.product((0, 1), repeat=ndim):
        w = np.ones(batch.shape[0])
        for d, c in enumerate(corner):
            w = w * (frac[:, d] if c else 1.0 - frac[:, d])
        idx = tuple(i0[:, d] + corner[d] for d in range(ndim))
        out += w * values[idx]
    return out[0] if single else out


def functional_polar_split(psi: WaveFunctional) -> FunctionalPolar:
    """Pointwise magnitude and wrapped phase of the wave functional."""
    mag = np.abs(psi.values)
    eps = FUNCTIONAL_NODE_REL * float(np.max(mag))
    return FunctionalPolar(psi.domain, mag, np.angle(psi.values), flagged=mag <= eps)
