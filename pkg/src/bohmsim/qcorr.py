"""Field-space correction bundle coupling the wave functional to the lattice field.

The per-site correction density is

    q_j = U_j * (d^2 R_fun / dpsi_j dpsi_j^*) / R_fun   evaluated at the field,

with the mixed second derivative taken on the functional magnitude grid and
interpolated at the current configuration.  Its derivatives with respect to
the field (the propagator extra term and the polar-split derivative fields)
are perturb-and-reevaluate central differences with step h_c/4 by default.

Two coupling layouts are supported:

* joint      -- the configuration lattice IS the functional lattice (M sites);
* broadcast  -- a single-mode functional (M = 1) evaluated at each site value
                of an arbitrarily long spatial field.

Conversion of the raw field-space derivative into polar-split source and
potential terms carries a factor convention:

* ``exact``      -- factors from exact Wirtinger calculus, consistent with the
                    propagator that applies the extra term additively:
                    potential addend (1/2R) dq_dR, continuity source +dq_dS;
* ``as_printed`` -- the doubled variant: addend (1/R) dq_dR, source -2 dq_dS.

Sites where the functional magnitude falls below its node threshold carry the
annihilation flag: the result is masked there (no pilot wave, no number).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .funcspace import (FunctionalPolar, evaluate_functional_at,
                        functional_derivative)
from .grids import LatticeField, PhysicsParams
from .polar import PolarField, standard_quantum_potential
from .potentials import PotentialSpec

MODE_INTEGRAL = "integral"
MODE_LOCAL = "local"
QBAR_ANTICOMMUTATOR = "anticommutator"
QBAR_DIRECT = "direct"
CONVENTION_EXACT = "exact"
CONVENTION_AS_PRINTED = "as_printed"


def _source_factor(convention: str) -> float:
    if convention == CONVENTION_EXACT:
        return 1.0
    if convention == CONVENTION_AS_PRINTED:
        return -2.0
    raise ConfigurationError(f"unknown convention {convention!r}")


def _potential_factor(convention: str) -> float:
    if convention == CONVENTION_EXACT:
        return 0.5
    if convention == CONVENTION_AS_PRINTED:
        return 1.0
    raise ConfigurationError(f"unknown convention {convention!r}")


class _Coupling:
    """Evaluation kernel binding a functional magnitude to a field configuration."""

    def __init__(self, rfun: FunctionalPolar, config: LatticeField,
                 U: PotentialSpec, t: float = 0.0, swap_order: bool = False):
        self.domain = rfun.domain
        self.rgrid = rfun.magnitude
        self.eps = rfun.node_threshold
        self.config = config
        self.u_sites = U.on_grid(config.grid, t)
        m = self.domain.lattice.sites
        self.broadcast = (m == 1)
        if not self.broadcast and config.grid.sites != m:
            raise ConfigurationError(
                f"a {m}-site functional couples only to a matching {m}-site lattice; "
                f"got a {config.grid.sites}-site configuration (site-wise broadcast "
                f"requires a single-mode functional)")
        self.mixed = [self._mixed_grid(rfun, j, swap_order) for j in range(m)]

    @staticmethod
    def _mixed_grid(rfun: FunctionalPolar, j: int, swap_order: bool) -> np.ndarray:
        key = (j, swap_order)
        cache = rfun._derivative_cache
        if key not in cache:
            if swap_order:
                inner = functional_derivative(rfun.domain, rfun.magnitude, j, "wrt_psi")
                cache[key] = functional_derivative(rfun.domain, inner, j,
                                                   "wrt_psi_star").real
            else:
                cache[key] = functional_derivative(rfun.domain, rfun.magnitude, j,
                                                   "mixed_second")
        return cache[key]

    # -- broadcast path: every quantity is per-site and sites are independent --

    def _ratio_broadcast(self, site_values: np.ndarray):
        pts = np.asarray(site_values, dtype=complex).reshape(-1, 1)
        num = np.atleast_1d(evaluate_functional_at(self.domain, self.mixed[0], pts))
        den = np.atleast_1d(evaluate_functional_at(self.domain, self.rgrid, pts))
        small = den <= self.eps
        ratio = num.real / np.where(small, 1.0, den)
        return ratio, small

    # -- joint path: the whole configuration enters every site's density --

    def _q_sites_joint(self, config_values: np.ndarray):
        den = evaluate_functional_at(self.domain, self.rgrid, config_values)
        small = den <= self.eps
        d = 1.0 if small else den
        q = np.array([evaluate_functional_at(self.domain, self.mixed[j], config_values).real / d
                      for j in range(self.domain.lattice.sites)])
        return self.u_sites * q, bool(small)

    def q_sites(self, config_values=None):
        """Per-site correction density and its annihilation mask."""
        vals = self.config.values if config_values is None else config_values
        if self.broadcast:
            ratio, small = self._ratio_broadcast(vals)
            return self.u_sites * ratio, small
        q, small = self._q_sites_joint(vals)
        return q, np.full(len(q), small)

    def integral(self, config_values=None) -> float:
        """Spatially integrated density sum_k a * q_k (masked sites excluded)."""
        q, small = self.q_sites(config_values)
        return float(self.config.grid.spacing * np.sum(np.where(small, 0.0, q)))

    def site_derivative(self, perturb, mode: str, step: float):
        """Central-difference derivative of the density integral per site.

        perturb(values, site, delta) -> new site value(s); in broadcast mode all
        sites are perturbed at once (they are independent), in joint mode one
        site at a time with full re-evaluation.  Returns (derivative, mask).
        """
        a = self.config.grid.spacing
        vals = self.config.values
        if self.broadcast:
            plus = perturb(vals, None, +step)
            minus = perturb(vals, None, -step)
            r_plus, s_plus = self._ratio_broadcast(plus)
            r_minus, s_minus = self._ratio_broadcast(minus)
            _, s_base = self._ratio_broadcast(vals)
            if mode == MODE_INTEGRAL:
                # only the site's own term of the integral responds: a cancels 1/a
                deriv = self.u_sites * (r_plus - r_minus) / (2.0 * step)
            else:
                deriv = self.u_sites * (r_plus - r_minus) / (2.0 * step) / a
            return deriv, (s_plus | s_minus | s_base)

        n = self.config.grid.sites
        deriv = np.empty(n)
        mask = np.zeros(n, dtype=bool)
        for j in range(n):
            vp = vals.copy()
            vp[j] = perturb(vals, j, +step)
            vm = vals.copy()
            vm[j] = perturb(vals, j, -step)
            if mode == MODE_INTEGRAL:
                qp, sp = self._q_sites_joint(vp)
                qm, sm = self._q_sites_joint(vm)
                fp = a * np.sum(qp)
                fm = a * np.sum(qm)
                deriv[j] = (fp - fm) / (2.0 * step * a)
                mask[j] = sp or sm
            else:
                qp, sp = self._q_sites_joint(vp)
                qm, sm = self._q_sites_joint(vm)
                deriv[j] = (qp[j] - qm[j]) / (2.0 * step * a)
                mask[j] = sp or sm
        return deriv, mask

    def default_step(self) -> float:
        return self.domain.spacing / 4.0


def qcal_density(rfun: FunctionalPolar, config: LatticeField, U: PotentialSpec,
                 t: float = 0.0) -> np.ma.MaskedArray:
    """Per-site correction density; masked sites carry the annihilation flag."""
    q, mask = _Coupling(rfun, config, U, t).q_sites()
    return np.ma.masked_array(q, mask=mask)


def qbar_density(rfun: FunctionalPolar, config: LatticeField, U: PotentialSpec,
                 t: float = 0.0, qbar_mode: str = QBAR_ANTICOMMUTATOR) -> np.ma.MaskedArray:
    """Conjugate-branch density: exact negation under the anticommutator
    postulate, or the swapped-derivative-order evaluation in direct mode."""
    if qbar_mode == QBAR_ANTICOMMUTATOR:
        return -qcal_density(rfun, config, U, t)
    if qbar_mode == QBAR_DIRECT:
        q, mask = _Coupling(rfun, config, U, t, swap_order=True).q_sites()
        return np.ma.masked_array(q, mask=mask)
    raise ConfigurationError(f"unknown qbar_mode {qbar_mode!r}")


def extra_term(rfun: FunctionalPolar, config: LatticeField, U: PotentialSpec,
               t: float = 0.0, mode: str = MODE_INTEGRAL,
               step: float = None, swap_order: bool = False) -> np.ma.MaskedArray:
    """Propagator extra term: d/dpsi_j^* of the density integral (or of the
    same-site density in local mode), recombined from q/p perturbations.

    swap_order evaluates the conjugate-branch density (derivative order
    swapped) instead; used by the direct qbar mode only.
    """
    if mode not in (MODE_INTEGRAL, MODE_LOCAL):
        raise ConfigurationError(f"unknown coupling mode {mode!r}")
    coupling = _Coupling(rfun, config, U, t, swap_order=swap_order)
    h = coupling.default_step() if step is None else step

    def move_q(vals, j, delta):
        if j is None:
            return vals + delta
        return vals[j] + delta

    def move_p(vals, j, delta):
        if j is None:
            return vals + 1j * delta
        return vals[j] + 1j * delta

    dq, mq = coupling.site_derivative(move_q, mode, h)
    dp, mp = coupling.site_derivative(move_p, mode, h)
    e = 0.5 * (dq + 1j * dp)
    return np.ma.masked_array(e, mask=mq | mp)


STENCIL_WIRTINGER = "wirtinger"
STENCIL_POLAR = "polar"


def _polar_config(polar: PolarField, params: PhysicsParams) -> LatticeField:
    values = polar.amplitude * np.exp(1j * polar.phase_action / params.hbar)
    return LatticeField(polar.grid, values)


def dq_dr_fields(rfun: FunctionalPolar, polar: PolarField, U: PotentialSpec,
                 params: PhysicsParams, t: float = 0.0, step: float = None,
                 stencil: str = STENCIL_WIRTINGER):
    """Amplitude derivative of the density integral at fixed phase.

    Returns (raw, raw/R) as masked arrays; sites at amplitude nodes are masked.
    The default stencil converts the Wirtinger derivative exactly,
    dF/dR_j = 2 Re(conj(psi_j) E_j) / R_j, sharing the q/p evaluations with the
    extra term; ``polar`` perturbs R_j directly (radial displacements land
    between grid planes, which costs one order of interpolation accuracy).
    """
    config = _polar_config(polar, params)
    node = polar.amplitude <= polar.node_threshold
    safe_r = np.where(node, 1.0, polar.amplitude)
    if stencil == STENCIL_WIRTINGER:
        e = extra_term(rfun, config, U, t, mode=MODE_INTEGRAL, step=step)
        raw = 2.0 * np.real(np.conj(config.values) * np.ma.getdata(e)) / safe_r
        mask = np.ma.getmaskarray(e) | node
    elif stencil == STENCIL_POLAR:
        coupling = _Coupling(rfun, config, U, t)
        h = coupling.default_step() if step is None else step
        phase = np.exp(1j * polar.phase_action / params.hbar)

        def move_r(vals, j, delta):
            if j is None:
                return (polar.amplitude + delta) * phase
            return (polar.amplitude[j] + delta) * phase[j]

        raw, mask = coupling.site_derivative(move_r, MODE_INTEGRAL, h)
        mask = mask | node
    else:
        raise ConfigurationError(f"unknown stencil {stencil!r}")
    return (np.ma.masked_array(raw, mask=mask),
            np.ma.masked_array(raw / safe_r, mask=mask))


def dq_ds_field(rfun: FunctionalPolar, polar: PolarField, U: PotentialSpec,
                params: PhysicsParams, t: float = 0.0, step: float = None,
                stencil: str = STENCIL_WIRTINGER) -> np.ma.MaskedArray:
    """Phase derivative of the density integral at fixed amplitude.

    Default stencil: dF/dS_j = (2/hbar) Im(conj(psi_j) E_j), the exact
    tangential combination of the q/p central differences; ``polar`` rotates
    psi_j by +-h/hbar and re-evaluates.
    """
    config = _polar_config(polar, params)
    node = polar.amplitude <= polar.node_threshold
    if stencil == STENCIL_WIRTINGER:
        e = extra_term(rfun, config, U, t, mode=MODE_INTEGRAL, step=step)
        raw = (2.0 / params.hbar) * np.imag(np.conj(config.values) * np.ma.getdata(e))
        mask = np.ma.getmaskarray(e) | node
    elif stencil == STENCIL_POLAR:
        coupling = _Coupling(rfun, config, U, t)
        h = coupling.default_step() if step is None else step
        hbar = params.hbar

        def move_s(vals, j, delta):
            rot = np.exp(1j * delta / hbar)
            if j is None:
                return vals * rot
            return vals[j] * rot

        raw, mask = coupling.site_derivative(move_s, MODE_INTEGRAL, h)
        mask = mask | node
    else:
        raise ConfigurationError(f"unknown stencil {stencil!r}")
    return np.ma.masked_array(raw, mask=mask)


@dataclass
class QPotentialDecomposition:
    """Modified quantum potential and its two addends."""

    total: np.ma.MaskedArray
    standard: np.ma.MaskedArray
    correction: np.ma.MaskedArray


def modified_quantum_potential(polar: PolarField, rfun: FunctionalPolar,
                               U: PotentialSpec, params: PhysicsParams,
                               t: float = 0.0, convention: str = CONVENTION_AS_PRINTED,
                               step: float = None) -> QPotentialDecomposition:
    """Standard quantum potential plus the field-space correction addend."""
    q_std = standard_quantum_potential(polar, params)
    _, over_r = dq_dr_fields(rfun, polar, U, params, t=t, step=step)
    corr = _potential_factor(convention) * over_r
    return QPotentialDecomposition(total=q_std + corr, standard=q_std, correction=corr)


def continuity_source(polar: PolarField, rfun: FunctionalPolar, U: PotentialSpec,
                      params: PhysicsParams, t: float = 0.0,
                      convention: str = CONVENTION_AS_PRINTED,
                      antiparticle: bool = False,
                      qbar_mode: str = QBAR_ANTICOMMUTATOR,
                      step: float = None) -> np.ma.MaskedArray:
    """Source term of the sourced continuity equation (per-site).

    The particle branch converts dq_dS with the convention factor; under the
    anticommutator postulate the antiparticle branch is its exact negation.
    """
    ds = dq_ds_field(rfun, polar, U, params, t=t, step=step)
    src = _source_factor(convention) * ds
    if antiparticle and qbar_mode == QBAR_ANTICOMMUTATOR:
        src = -src
    return src


@dataclass
class QCorrection:
    """Bundle of the per-site correction fields at one instant."""

    q_density: np.ma.MaskedArray
    q_bar: np.ma.MaskedArray
    extra: np.ma.MaskedArray
    dq_dr: np.ma.MaskedArray
    dq_dr_over_r: np.ma.MaskedArray
    dq_ds: np.ma.MaskedArray
    mode: str
    qbar_mode: str
    annihilated: np.ndarray


def build_qcorrection(rfun: FunctionalPolar, polar: PolarField, U: PotentialSpec,
                      params: PhysicsParams, t: float = 0.0,
                      mode: str = MODE_INTEGRAL,
                      qbar_mode: str = QBAR_ANTICOMMUTATOR,
                      step: float = None) -> QCorrection:
    config = LatticeField(polar.grid, polar.amplitude * np.exp(1j * polar.phase_action / params.hbar))
    q = qcal_density(rfun, config, U, t)
    qb = qbar_density(rfun, config, U, t, qbar_mode=qbar_mode)
    e = extra_term(rfun, config, U, t, mode=mode, step=step)
    raw, over_r = dq_dr_fields(rfun, polar, U, params, t=t, step=step)
    ds = dq_ds_field(rfun, polar, U, params, t=t, step=step)
    return QCorrection(q_density=q, q_bar=qb, extra=e, dq_dr=raw,
                       dq_dr_over_r=over_r, dq_ds=ds, mode=mode,
                       qbar_mode=qbar_mode, annihilated=np.ma.getmaskarray(q).copy())
