"""Built-in identity suite behind the check-identities command.

Each check returns (name, status, detail) where status is PASS, FAIL, or INFO.
INFO marks checks that are expected to deviate under the selected options
(doubled-factor convention, direct conjugate-branch mode) and are reported
without failing the run.
"""
from __future__ import annotations

import numpy as np

from .funcspace import FunctionalPolar, build_config_grid
from .grids import LatticeField, PhysicsParams, build_spatial_grid
from .modschrod import chain_rule_check
from .polar import PolarField
from .potentials import constant_potential, free_potential
from .qcorr import (CONVENTION_EXACT, QBAR_ANTICOMMUTATOR, continuity_source,
                    dq_dr_fields, dq_ds_field, extra_term, qbar_density,
                    qcal_density)

PASS, FAIL, INFO = "PASS", "FAIL", "INFO"


def _gaussian_rfun(domain, center=0.0, width=1.0):
    z = domain.site_complex(0)
    mag = np.exp(-np.abs(z - center) ** 2 / (2 * width ** 2)) * np.ones(domain.shape)
    return FunctionalPolar(domain, mag, np.zeros(domain.shape),
                           flagged=mag <= 1e-10 * mag.max())


def run_identity_suite(convention: str = CONVENTION_EXACT,
                       qbar_mode: str = QBAR_ANTICOMMUTATOR):
    params = PhysicsParams()
    lat1 = build_spatial_grid(1, 1.0, 0.0, "periodic")
    dom = build_config_grid(lat1, half_width=4.0, points=1024, point_cap=2 ** 26)
    U1 = constant_potential(1.0)
    results = []

    # 1. chain rule in the polar chart
    rep = chain_rule_check(params=params)
    if convention == CONVENTION_EXACT:
        status = PASS if rep.max_exact < 1e-10 else FAIL
        detail = f"exact-convention deviation {rep.max_exact:.2e} (doubled variant {rep.max_printed:.2e})"
    else:
        # the doubled variant is selected knowingly; report, do not fail
        status = INFO
        detail = (f"selected doubled-factor convention deviates from the exact "
                  f"identity by {rep.max_printed:.2e} (factor ~2); informational")
    results.append(("chain_rule", status, detail))

    # 2. conjugate-branch antisymmetry
    rfun = _gaussian_rfun(dom, center=0.5)
    cfg = LatticeField(lat1, [0.5 + 0.25j])
    q = qcal_density(rfun, cfg, U1)[0]
    qb = qbar_density(rfun, cfg, U1, qbar_mode=qbar_mode)[0]
    if qbar_mode == QBAR_ANTICOMMUTATOR:
        ok = qb == -q
        results.append(("qbar_antisymmetry", PASS if ok else FAIL,
                        f"q={q:.6f}, qbar={qb:.6f} (exact negation required)"))
    else:
        results.append(("qbar_antisymmetry", INFO,
                        f"direct mode: qbar={qb:.6f} ~ +q={q:.6f}; the sign-flip "
                        "postulate is inactive"))

    # 3. phase invariance: centered magnitude => vanishing source
    rfun0 = _gaussian_rfun(dom, center=0.0)
    g = build_spatial_grid(32, 0.25, -4.0, "periodic")
    x = g.coordinates
    pol = PolarField(g, 0.4 + 0.3 * np.exp(-x ** 2 / 4), 0.2 * x, np.zeros(32, bool))
    src = continuity_source(pol, rfun0, U1, params, convention=convention)
    worst = float(np.max(np.abs(np.ma.filled(src, 0.0))))
    bound = 30.0 * dom.spacing ** 2
    results.append(("phase_invariance_source", PASS if worst < bound else FAIL,
                    f"max |source| {worst:.2e} < {bound:.2e} for modulus-only functional"))

    # 4. zero-potential reduction is exact
    U0 = free_potential()
    zq = qcal_density(rfun, cfg, U0)
    ze = extra_term(rfun, cfg, U0)
    zr, _ = dq_dr_fields(rfun, pol, U0, params)
    zs = dq_ds_field(rfun, pol, U0, params)
    all_zero = (np.all(np.ma.getdata(zq) == 0) and np.all(np.ma.getdata(ze) == 0)
                and np.all(np.ma.getdata(zr) == 0) and np.all(np.ma.getdata(zs) == 0))
    results.append(("zero_potential_reduction", PASS if all_zero else FAIL,
                    "density, extra term and derivative fields all identically zero"))

    # 5. gradient checks against the closed-form family (aligned probe)
    probe = 0.5 + 0.5j
    rfun_c = _gaussian_rfun(dom, center=0.5)
    e = extra_term(rfun_c, LatticeField(lat1, [probe]), U1)[0]
    e_exact = (probe - 0.5) / 4.0
    pol1 = PolarField(lat1, np.array([abs(probe)]), np.array([np.angle(probe)]),
                      np.array([False]))
    raw, _ = dq_dr_fields(rfun_c, pol1, U1, params)
    ds = dq_ds_field(rfun_c, pol1, U1, params)
    dr_exact = 2 * np.real(np.conj(probe) * e_exact) / abs(probe)
    ds_exact = 2 * np.imag(np.conj(probe) * e_exact)
    rels = [abs(e - e_exact) / abs(e_exact), abs(raw[0] - dr_exact) / abs(dr_exact),
            abs(ds[0] - ds_exact) / abs(ds_exact)]
    worst_rel = max(rels)
    results.append(("gradient_checks", PASS if worst_rel < 1e-4 else FAIL,
                    f"max relative error vs symbolic oracle {worst_rel:.2e}"))

    return results


def suite_failed(results) -> bool:
    return any(status == FAIL for _, status, _ in results)
