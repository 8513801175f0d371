"""Configuration-space grid, wave functional, functional derivatives."""
import numpy as np
import pytest

from bohmsim.errors import ConfigurationError, OutOfBoxError
from bohmsim.funcspace import (build_config_grid, evaluate_functional_at,
                               functional_derivative, functional_polar_split,
                               init_wave_functional)
from bohmsim.grids import build_spatial_grid

LAT1 = build_spatial_grid(1, 1.0, 0.0, "periodic")
LAT2 = build_spatial_grid(2, 1.0, 0.0, "periodic")


def test_config_grid_arithmetic():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    assert dom.ndim == 2
    assert np.prod(dom.shape) == 4096
    assert dom.spacing == pytest.approx(0.1875)

    dom2 = build_config_grid(LAT2, half_width=4.0, points=32)
    assert dom2.ndim == 4
    assert np.prod(dom2.shape, dtype=np.int64) == 2**20


def test_point_cap_enforced():
    lat3 = build_spatial_grid(3, 1.0)
    with pytest.raises(ConfigurationError, match="cap"):
        build_config_grid(lat3, half_width=4.0, points=64)


@pytest.mark.parametrize("points", [7, 6, 9])
def test_points_must_be_even_and_at_least_eight(points):
    with pytest.raises(ConfigurationError):
        build_config_grid(LAT1, half_width=4.0, points=points)


def test_init_gaussian_normalized_and_symmetric():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    psi = init_wave_functional(dom, [0.0 + 0j], width=1.0)
    assert psi.norm() == pytest.approx(1.0, abs=1e-8)
    # rotational symmetry of the centered Gaussian: q <-> p exchange
    np.testing.assert_allclose(psi.values, psi.values.T, atol=1e-14)


def test_init_gaussian_peak_location():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    psi = init_wave_functional(dom, [2.0 + 0j], width=0.8)
    dens = np.abs(psi.values) ** 2
    iq, ip = np.unravel_index(np.argmax(dens), dens.shape)
    coords = dom.axis_coordinates()
    assert coords[iq] == pytest.approx(2.0, abs=dom.spacing / 2)
    assert coords[ip] == pytest.approx(0.0, abs=dom.spacing / 2)


def test_init_gaussian_second_moment():
    # amplitude exp(-|psi|^2/(2w^2)) => density exp(-|psi|^2/w^2) => E|psi|^2 = w^2;
    # oracle: dense-grid quadrature of the same integrand
    w = 1.0
    dom = build_config_grid(LAT1, half_width=6.0 * w, points=64)
    psi = init_wave_functional(dom, [0.0 + 0j], width=w)
    z = dom.site_complex(0)
    m2 = np.sum(np.abs(z)**2 * np.abs(psi.values)**2) * dom.cell_measure
    fine = build_config_grid(LAT1, half_width=6.0 * w, points=256)
    psi_f = init_wave_functional(fine, [0.0 + 0j], width=w)
    zf = fine.site_complex(0)
    m2_oracle = np.sum(np.abs(zf)**2 * np.abs(psi_f.values)**2) * fine.cell_measure
    assert m2 == pytest.approx(m2_oracle, rel=0.02)
    assert m2 == pytest.approx(w**2, rel=0.02)


def test_init_rejects_bad_width_and_warns_on_tight_box():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    with pytest.raises(ConfigurationError):
        init_wave_functional(dom, [0.0 + 0j], width=-1.0)
    with pytest.warns(UserWarning):
        init_wave_functional(dom, [4.0 + 0j], width=1.0)


def test_wirtinger_first_derivative_of_coordinate():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    q = np.broadcast_to(dom.axis_mesh(0), dom.shape).copy()
    d = functional_derivative(dom, q, 0, "wrt_psi_star")
    np.testing.assert_allclose(d, 0.5, atol=1e-12)
    d2 = functional_derivative(dom, q, 0, "wrt_psi")
    np.testing.assert_allclose(d2, 0.5, atol=1e-12)


def test_wirtinger_independence():
    # f = psi* = q - i p depends only on psi*: d/dpsi must vanish
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    f = np.broadcast_to(dom.site_complex(0).conj(), dom.shape).copy()
    d = functional_derivative(dom, f, 0, "wrt_psi")
    np.testing.assert_allclose(d, 0.0, atol=1e-12)


def test_mixed_second_of_quadratic():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    f = np.abs(dom.site_complex(0))**2 * np.ones(dom.shape)
    d = functional_derivative(dom, f, 0, "mixed_second")
    interior = (slice(1, -1), slice(1, -1))
    np.testing.assert_allclose(d[interior], 1.0, atol=1e-9)


def test_mixed_second_of_gaussian_converges():
    errs = []
    for n in (64, 128):
        dom = build_config_grid(LAT1, half_width=6.0, points=n)
        f = np.exp(-np.abs(dom.site_complex(0))**2 / 2) * np.ones(dom.shape)
        d = functional_derivative(dom, f, 0, "mixed_second")
        i0 = np.argmin(np.abs(dom.axis_coordinates()))
        errs.append(abs(d[i0, i0] + 0.5))
    assert errs[0] < 10 * (12.0 / 64) ** 2
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)


def test_functional_derivative_linear_in_f():
    rng = np.random.default_rng(5)
    dom = build_config_grid(LAT1, half_width=4.0, points=16)
    f = rng.normal(size=dom.shape)
    g = rng.normal(size=dom.shape)
    for kind in ("wrt_psi", "wrt_psi_star", "mixed_second"):
        lhs = functional_derivative(dom, 2.0 * f - 0.5 * g, 0, kind)
        rhs = 2.0 * functional_derivative(dom, f, 0, kind) \
            - 0.5 * functional_derivative(dom, g, 0, kind)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_functional_derivative_site_range():
    dom = build_config_grid(LAT1, half_width=4.0, points=16)
    with pytest.raises(IndexError):
        functional_derivative(dom, np.ones(dom.shape), 1, "wrt_psi")


def test_lattice_spacing_enters_regularization():
    lat = build_spatial_grid(1, 0.5, 0.0, "periodic")
    dom = build_config_grid(lat, half_width=6.0, points=64)
    q = np.broadcast_to(dom.axis_mesh(0), dom.shape).copy()
    d = functional_derivative(dom, q, 0, "wrt_psi_star")
    np.testing.assert_allclose(d, 0.5 / 0.5, atol=1e-12)


def test_interpolation_constant_and_linear_exact():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    const = np.full(dom.shape, 3.25)
    assert evaluate_functional_at(dom, const, [0.137 + 0.88j]) == pytest.approx(3.25)
    q = np.broadcast_to(dom.axis_mesh(0), dom.shape).copy()
    assert evaluate_functional_at(dom, q, [0.375 + 0j]) == pytest.approx(0.375)


def test_interpolation_reproduces_multilinear_exactly():
    dom = build_config_grid(LAT1, half_width=6.0, points=32)
    q = dom.axis_mesh(0)
    p = dom.axis_mesh(1)
    f = (1.7 + 0.3 * q - 1.1 * p + 0.25 * q * p) * np.ones(dom.shape)
    rng = np.random.default_rng(9)
    for _ in range(20):
        zq, zp = rng.uniform(-5, 5, 2)
        want = 1.7 + 0.3 * zq - 1.1 * zp + 0.25 * zq * zp
        got = evaluate_functional_at(dom, f, [zq + 1j * zp])
        assert got == pytest.approx(want, rel=1e-12)


def test_interpolation_gaussian_off_grid():
    dom = build_config_grid(LAT1, half_width=6.0, points=128)
    z = dom.site_complex(0)
    f = np.exp(-np.abs(z)**2 / 2) * np.ones(dom.shape)
    pt = 0.4131 + 0.7772j
    want = np.exp(-abs(pt)**2 / 2)
    got = evaluate_functional_at(dom, f, [pt])
    assert abs(got - want) < 5 * dom.spacing**2


def test_interpolation_out_of_box():
    dom = build_config_grid(LAT1, half_width=6.0, points=64)
    with pytest.raises(OutOfBoxError) as err:
        evaluate_functional_at(dom, np.ones(dom.shape), [7.0 + 0j])
    assert err.value.site == 0
    assert err.value.value == 7.0 + 0j


def test_interpolation_four_dimensional():
    dom = build_config_grid(LAT2, half_width=3.0, points=12)
    q0, p0 = dom.axis_mesh(0), dom.axis_mesh(1)
    q1, p1 = dom.axis_mesh(2), dom.axis_mesh(3)
    f = (q0 + 2 * p0 - q1 + 0.5 * p1) * np.ones(dom.shape)
    got = evaluate_functional_at(dom, f, [0.3 - 0.2j, -1.1 + 0.75j])
    assert got == pytest.approx(0.3 - 0.4 + 1.1 + 0.375, rel=1e-12)


def test_polar_split_basics():
    dom = build_config_grid(LAT1, half_width=6.0, points=32)
    psi = init_wave_functional(dom, [0.0 + 0j], width=1.2)
    split = functional_polar_split(psi)
    np.testing.assert_allclose(split.phase, 0.0, atol=1e-14)
    np.testing.assert_allclose(split.magnitude, np.abs(psi.values))

    from bohmsim.funcspace import WaveFunctional
    rotated = WaveFunctional(dom, psi.values * np.exp(0.9j))
    split_rot = functional_polar_split(rotated)
    np.testing.assert_allclose(split_rot.magnitude, split.magnitude, atol=1e-15)
