"""Potential specifications."""
import numpy as np
import pytest

from bohmsim.errors import ConfigurationError
from bohmsim.grids import build_spatial_grid
from bohmsim.potentials import (PotentialSpec, barrier_potential,
                                constant_potential, free_potential,
                                harmonic_potential, tabulated_potential)

GRID = build_spatial_grid(8, 0.5, -2.0)


def test_forms_evaluate():
    np.testing.assert_allclose(free_potential().on_grid(GRID), 0.0)
    np.testing.assert_allclose(constant_potential(1.5).on_grid(GRID), 1.5)
    x = GRID.coordinates
    np.testing.assert_allclose(harmonic_potential(2.0, 0.5).on_grid(GRID),
                               (x - 0.5) ** 2)
    b = barrier_potential(3.0, -1.0, 0.0).on_grid(GRID)
    np.testing.assert_allclose(b, np.where((x >= -1) & (x <= 0), 3.0, 0.0))


def test_tabulated_static_and_time_dependent():
    vals = np.arange(8.0)
    np.testing.assert_allclose(tabulated_potential(vals).on_grid(GRID), vals)
    tab = tabulated_potential(np.stack([vals, 2 * vals]), times=[0.0, 1.0])
    np.testing.assert_allclose(tab.on_grid(GRID, 0.5), 1.5 * vals)
    # clamped outside the knots
    np.testing.assert_allclose(tab.on_grid(GRID, 5.0), 2.0 * vals)


def test_validation():
    with pytest.raises(ConfigurationError):
        PotentialSpec(form="imaginary")
    with pytest.raises(ConfigurationError):
        barrier_potential(1.0, 2.0, 1.0).on_grid(GRID)
    with pytest.raises(ConfigurationError):
        tabulated_potential(np.ones((2, 8)))  # missing times
    with pytest.raises(ConfigurationError):
        tabulated_potential(np.ones(5)).on_grid(GRID)


def test_is_zero():
    assert free_potential().is_zero()
    assert constant_potential(0.0).is_zero()
    assert not constant_potential(0.1).is_zero()
    assert tabulated_potential(np.zeros(4)).is_zero()
