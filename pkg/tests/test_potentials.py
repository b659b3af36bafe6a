import numpy as np
import pytest

from diracflow.numerics import UnitsConfig, make_grid
from diracflow.potentials import (build_potential, constant_B, constant_E, constant_V, plane_wave_field,
                                  scalar_well, zero_potential)

U = UnitsConfig(c=2.0)
G = make_grid(2, [8.0, 8.0], [16, 16])


def test_constant_E_fields():
    pot = constant_E(G, U, [0.3, -0.1, 0])
    E, H = pot.field_strengths(1.7)
    assert np.allclose(E[0], 0.3) and np.allclose(E[1], -0.1)
    assert np.allclose(H, 0)
    assert np.max(np.abs(pot.lorentz_residual(0.5))) == 0


def test_constant_B_is_background():
    pot = constant_B(G, U, [0, 0, 0.7])
    assert pot.has_background_field
    _, H = pot.field_strengths(0.0)
    assert np.allclose(H[2], 0.7)


def test_well_field_is_minus_gradient():
    g = make_grid(2, [24.0, 24.0], [64, 64])
    pot = scalar_well(g, U, 1.0, 1.5)
    E, _ = pot.field_strengths(0.0)
    x, y = g.coords
    V = -np.exp(-(x**2 + y**2) / (2 * 1.5**2))
    assert np.allclose(E[0], x / 1.5**2 * V, atol=1e-10)
    assert pot.max_abs_V() == pytest.approx(1.0)


def test_plane_wave_field_is_lorentz_compliant():
    pot = plane_wave_field(G, U, 0.2, mode=2, polarization=1)
    assert np.max(np.abs(pot.lorentz_residual(0.3))) <= 1e-12
    E, H = pot.field_strengths(0.3)
    # a vacuum wave has |E| = |H|
    assert np.allclose(np.abs(E[1]), np.abs(H[2]), atol=1e-10)


def test_plane_wave_field_rejects_longitudinal():
    with pytest.raises(ValueError):
        plane_wave_field(G, U, 0.2, polarization=0)


def test_numeric_time_derivative_fallback():
    pot = plane_wave_field(G, U, 0.2, mode=1)
    pot.A_t_fn = None
    k = 2 * np.pi / 8
    x = G.coords[0]
    assert np.allclose(pot.A_t(0.4)[1], 0.2 * U.c * k * np.sin(k * x - U.c * k * 0.4), atol=1e-8)


@pytest.mark.parametrize("spec", [{"family": "zero"}, {"family": "constant-V", "V0": 0.5},
                                  {"family": "scalar-well", "depth": 1, "width": 2}])
def test_build_potential_round_trip(spec):
    assert build_potential(G, U, spec).spec["family"] == spec["family"]


def test_build_potential_unknown_family():
    with pytest.raises(ValueError, match="unknown potential family"):
        build_potential(G, U, {"family": "coulomb"})


def test_static_flags():
    assert zero_potential(G, U).static and constant_V(G, U, 1).static
    assert not constant_E(G, U, [1, 0, 0]).static
