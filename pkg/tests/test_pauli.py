import numpy as np
import pytest

from diracflow.dirac import EvolverConfig, evolve, init_gaussian
from diracflow.numerics import UnitsConfig, make_grid
from diracflow.pauli import (PauliConfig, PauliPair, PauliRun, compare_dirac_pauli, evolve_pauli, pauli_step,
                             spin_expectation, u_terms)
from diracflow.potentials import constant_B, constant_E, plane_wave_field, scalar_well, zero_potential

U = UnitsConfig()
G = make_grid(1, [32.0], [256])


def _gauss_pair(g=G, width=1.0, chi_weight=0.0, mode="linear"):
    psi = init_gaussian(g, [0.0] * g.dim, width, weights=(1, 0, chi_weight, 0), units=U).values
    return PauliPair(g, psi[:2], psi[2:], mode=mode)


def test_u_terms_hand_example():
    g = make_grid(1, [8.0], [8])
    one = np.ones(8)
    phi = np.array([one, 0 * one], complex)
    chi = phi.copy()
    Ez = 0.7
    E = np.array([0 * one, 0 * one, Ez * one])
    up, uc = u_terms(phi, chi, E, U)
    assert np.allclose(up, U.hbar * U.q * Ez / (2 * U.m * U.c))
    assert np.allclose(uc, up)


def test_u_terms_degenerate_cases():
    one = np.ones(8)
    phi = np.array([one, 0.3j * one])
    chi = np.zeros_like(phi)
    up, uc = u_terms(phi, chi, np.zeros((3, 8)), U)
    assert np.all(up == 0) and np.all(uc == 0)
    up, uc = u_terms(phi, chi, np.ones((3, 8)), U)
    assert np.all(up == 0) and np.all(uc == 0)


def test_pair_validation():
    with pytest.raises(ValueError, match="shape"):
        PauliPair(G, np.zeros((2, 8)), np.zeros((2, 256)))
    with pytest.raises(ValueError, match="mode"):
        PauliPair(G, np.zeros((2, 256)), np.zeros((2, 256)), mode="full")


def test_free_spreading():
    sigma = 1.0
    pair = _gauss_pair(width=sigma)
    widths = []

    def obs(p):
        rho = np.sum(np.abs(p.phi) ** 2, axis=0)
        x = G.coords[0]
        widths.append((p.t, G.integrate(rho * x**2) / G.integrate(rho)))

    evolve_pauli(pair, zero_potential(G, U), PauliConfig(0.005, 400), observer=obs)
    for t, w2 in widths:
        assert w2 == pytest.approx(sigma**2 * (1 + (U.hbar * t / (2 * U.m * sigma**2)) ** 2), abs=1e-6)


def test_spin_precession_small_grid():
    g = make_grid(2, [8.0, 8.0], [16, 16])
    H = 0.7
    omega = abs(U.q) * H / (U.m * U.c)
    dt = 2 * np.pi / omega / 200
    phi = np.ones((2, 16, 16), complex) / np.sqrt(2 * 64.0)
    sx = []
    evolve_pauli(PauliPair(g, phi, np.zeros_like(phi)), constant_B(g, U, [0, 0, H]), PauliConfig(dt, 2000),
                 observer=lambda p: sx.append(spin_expectation(p)[0]))
    from diracflow.numerics import dominant_frequency

    assert dominant_frequency(sx, dt) == pytest.approx(omega, rel=5e-3)


def test_decoupling_with_zero_chi():
    pot = constant_E(G, U, [0.2, 0, 0.1])
    lin = evolve_pauli(_gauss_pair(), pot, PauliConfig(0.005, 100, 100))
    cpl = evolve_pauli(_gauss_pair(mode="coupled"), pot, PauliConfig(0.005, 100, 100, mode="coupled"))
    assert np.array_equal(lin.snapshots[-1].phi, cpl.snapshots[-1].phi)


@pytest.mark.parametrize("mode", ["linear", "coupled"])
def test_block_norms_conserved(mode):
    g = make_grid(1, [32.0], [128])
    pot = constant_E(g, U, [0.3, 0, 0.2])
    pair = _gauss_pair(g, chi_weight=0.5, mode=mode)
    n0 = pair.norms()
    p = pair
    for _ in range(20):
        prev = p.norms()
        p = pauli_step(p, pot, 0.01)
        assert abs(p.norms()[0] - prev[0]) <= 1e-12 and abs(p.norms()[1] - prev[1]) <= 1e-12
    assert p.norms() == pytest.approx(n0, abs=1e-10)


def test_stability_guard():
    from diracflow.dirac import StabilityError

    well = scalar_well(G, U, 1.0, 2.0)
    with pytest.warns(RuntimeWarning, match="per step"):
        pauli_step(_gauss_pair(), well, 0.05)
    with pytest.raises(StabilityError):
        evolve_pauli(_gauss_pair(), well, PauliConfig(0.05, 1, guard="refuse"))


def test_nonuniform_A_refused():
    with pytest.raises(ValueError, match="uniform vector potential"):
        pauli_step(_gauss_pair(), plane_wave_field(G, U, 0.1), 0.01)


def test_config_validation():
    with pytest.raises(ValueError):
        PauliConfig(0.01, 1, magnetic_sign=2)
    with pytest.raises(ValueError):
        PauliConfig(-0.01, 1)


def test_self_comparison_is_zero():
    pot = scalar_well(G, U, 1.0, 2.0)
    dirac = evolve(init_gaussian(G, [0.0], 1.0, units=U), pot, EvolverConfig(0.01, 20, 10))
    mirror = PauliRun(G, U, pot, PauliConfig(0.01, 20, 10),
                      [PauliPair(G, s.values[:2], s.values[2:], s.t) for s in dirac.snapshots])
    out = compare_dirac_pauli(dirac, mirror)
    assert out["density_l2_max"] == 0 and out["current_max"] == 0


def test_compare_requires_shared_grid_and_times():
    pot = zero_potential(G, U)
    dirac = evolve(init_gaussian(G, [0.0], 1.0, units=U), pot, EvolverConfig(0.01, 2, 2))
    g2 = make_grid(1, [32.0], [128])
    with pytest.raises(ValueError, match="grid"):
        compare_dirac_pauli(dirac, evolve_pauli(_gauss_pair(g2), zero_potential(g2, U), PauliConfig(0.01, 1)))
    with pytest.raises(ValueError, match="snapshot times"):
        late = _gauss_pair()
        late.t = 0.5
        compare_dirac_pauli(dirac, PauliRun(G, U, pot, PauliConfig(0.01, 1), [late]))


def test_pauli_limit_scaling():
    errs = []
    for c in (10.0, 20.0):
        uc = UnitsConfig(c=c)
        pot = scalar_well(G, uc, 1.0, 2.0)
        dirac = evolve(init_gaussian(G, [0.0], 1.0, units=uc, project="positive"), pot,
                       EvolverConfig(1e-3, 1000, 500))
        plain = init_gaussian(G, [0.0], 1.0, units=uc).values
        pauli = evolve_pauli(PauliPair(G, plain[:2], plain[2:]), pot, PauliConfig(1e-3, 1000, 500))
        errs.append(compare_dirac_pauli(dirac, pauli)["density_l2_max"])
    assert 2.8 <= errs[0] / errs[1] <= 5.7
