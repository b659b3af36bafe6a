"""Currents of the Dirac field and the identities relating them.

Everything here is evaluated from a :class:`~diracflow.dirac.SpinorJet`, so
time derivatives are generator-based when the jet came from the Hamiltonian
and history-based when it came from stored snapshots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirac import RunRecord, SpinorJet, jet_from_generator, jet_from_history
from .madelung import PHASE_SIGNS, MadelungData, PhaseGradientField, decompose, phase_gradient
from .numerics import GAMMA, METRIC, FourVectorField, GammaSet, Grid, PAULI, SpinorField, UnitsConfig, apply_matrix
from .potentials import FourPotential

IMAG_RESIDUE_LIMIT = 1e-10


@dataclass
class IdentityCheck:
    """Max and L2 size of a residual field plus where the max sits."""

    name: str
    max_abs: float
    l2: float
    location: tuple[float, ...]
    scale: float

    @property
    def relative(self) -> float:
        return self.max_abs / self.scale if self.scale > 0 else self.max_abs

    def to_dict(self) -> dict:
        return {"name": self.name, "max_abs": self.max_abs, "l2": self.l2,
                "location": list(self.location), "scale": self.scale, "relative": self.relative}


class IdentityViolation(AssertionError):
    def __init__(self, check: IdentityCheck, tol: float):
        self.check = check
        super().__init__(f"{check.name}: relative residual {check.relative:.3e} > {tol:.1e} "
                         f"(max at {check.location})")


def residual_check(name: str, res: np.ndarray, grid: Grid, scale: float, mask=None) -> IdentityCheck:
    """Reduce a residual (leading component axes allowed) to max / L2 / argmax."""
    res = np.abs(np.asarray(res, dtype=float))
    if mask is not None:
        res = np.where(mask, 0.0, res)
    flat = res.reshape(-1, *grid.shape).max(axis=0) if res.ndim > grid.dim else res
    idx = np.unravel_index(int(np.argmax(flat)), grid.shape)
    loc = tuple(float(ax[i]) for ax, i in zip(grid.axes, idx))
    l2 = float(np.sqrt(grid.integrate(np.sum(res.reshape(-1, *grid.shape) ** 2, axis=0))))
    return IdentityCheck(name, float(flat[idx]), l2, loc, float(scale))


# -- bilinears on jets -------------------------------------------------------

def _bil(a, M, b):
    return np.sum(np.conj(a) * apply_matrix(M, b), axis=0)


def jet_bilinear(jet: SpinorJet, M: np.ndarray) -> np.ndarray:
    return _bil(jet.psi, M, jet.psi)


def jet_bilinear_d(jet: SpinorJet, M: np.ndarray, mu: int) -> np.ndarray:
    dpsi = jet.d(mu)
    return _bil(dpsi, M, jet.psi) + _bil(jet.psi, M, dpsi)


def jet_bilinear_dd(jet: SpinorJet, M: np.ndarray, mu: int, nu: int) -> np.ndarray:
    a, b, ab = jet.d(mu), jet.d(nu), jet.dd(mu, nu)
    return _bil(ab, M, jet.psi) + _bil(a, M, b) + _bil(b, M, a) + _bil(jet.psi, M, ab)


def _real(z: np.ndarray, what: str, scale: float = 1.0) -> np.ndarray:
    resid = float(np.max(np.abs(np.imag(z)))) if z.size else 0.0
    if resid > IMAG_RESIDUE_LIMIT * max(scale, 1.0):
        raise ArithmeticError(f"{what} has imaginary residue {resid:.2e}: gamma algebra inconsistent")
    return np.real(z)


# -- currents ----------------------------------------------------------------

def dirac_current(psi: SpinorField, units: UnitsConfig, gammas: GammaSet = GAMMA) -> FourVectorField:
    g0 = gammas.gammas[0]
    vals = [units.c * _bil(psi.values, g0 @ gammas.gammas[mu], psi.values) for mu in range(4)]
    scale = float(np.max(np.abs(vals[0]))) if np.size(vals[0]) else 1.0
    return FourVectorField(psi.grid, _real(np.array(vals), "Dirac current", scale), psi.t)


def convective_current(jet: SpinorJet, potential: FourPotential, gammas: GammaSet = GAMMA) -> FourVectorField:
    """j0^mu = -(hbar/m) Im(psibar d^mu psi) - (q/(m c)) psibar psi A^mu."""
    u = jet.units
    g0 = gammas.gammas[0]
    sbar = np.real(_bil(jet.psi, g0, jet.psi))
    Amu = potential.four_potential(jet.t)
    vals = np.empty((4, *jet.grid.shape))
    for mu in range(4):
        vals[mu] = (-u.hbar / u.m * METRIC[mu, mu] * np.imag(_bil(jet.psi, g0, jet.d(mu)))
                    - u.q / (u.m * u.c) * sbar * Amu[mu])
    return FourVectorField(jet.grid, vals, jet.t)


def spin_current(jet: SpinorJet, gammas: GammaSet = GAMMA) -> FourVectorField:
    """i hbar d_nu (psibar [gamma^mu, gamma^nu] psi) / 4m."""
    u = jet.units
    g0 = gammas.gammas[0]
    vals = np.zeros((4, *jet.grid.shape), dtype=np.complex128)
    for mu in range(4):
        for nu in range(4):
            if mu != nu:
                vals[mu] += jet_bilinear_d(jet, g0 @ gammas.commutator(mu, nu), nu)
    vals = 1j * u.hbar / (4 * u.m) * vals
    return FourVectorField(jet.grid, _real(vals, "spin current", u.c), jet.t)


def div_dirac_current(jet: SpinorJet, gammas: GammaSet = GAMMA) -> np.ndarray:
    g0 = gammas.gammas[0]
    tot = sum(jet_bilinear_d(jet, g0 @ gammas.gammas[mu], mu) for mu in range(4))
    return jet.units.c * np.real(tot)


def div_convective_current(jet: SpinorJet, potential: FourPotential, gammas: GammaSet = GAMMA) -> np.ndarray:
    u = jet.units
    g0 = gammas.gammas[0]
    box = sum(METRIC[mu, mu] * _bil(jet.psi, g0, jet.dd(mu, mu)) for mu in range(4))
    Amu = potential.four_potential(jet.t)
    sbar = np.real(_bil(jet.psi, g0, jet.psi))
    dsbar_A = sum(np.real(jet_bilinear_d(jet, g0, mu)) * Amu[mu] for mu in range(4))
    return (-u.hbar / u.m * np.imag(box)
            - u.q / (u.m * u.c) * (dsbar_A + sbar * potential.lorentz_residual(jet.t)))


def div_spin_current(jet: SpinorJet, gammas: GammaSet = GAMMA) -> np.ndarray:
    u = jet.units
    g0 = gammas.gammas[0]
    tot = np.zeros(jet.grid.shape, dtype=np.complex128)
    for mu in range(4):
        for nu in range(4):
            if mu != nu:
                tot += jet_bilinear_dd(jet, g0 @ gammas.commutator(mu, nu), mu, nu)
    return np.real(1j * u.hbar / (4 * u.m) * tot)


@dataclass
class CurrentBundle:
    iota: FourVectorField
    j0: FourVectorField
    spin: FourVectorField
    fluxes: list[FourVectorField]
    flux_mask: np.ndarray
    checks: dict[str, IdentityCheck] = field(default_factory=dict)


def gordon_decompose(jet: SpinorJet, potential: FourPotential, gammas: GammaSet = GAMMA,
                     floor: float | None = None, tol: float | None = None) -> CurrentBundle:
    """Dirac current, its convective and spin parts, and the four Madelung fluxes.

    With ``tol`` given, a relative Gordon residual above it raises
    :class:`IdentityViolation` naming the worst point.
    """
    grid = jet.grid
    iota = dirac_current(jet.spinor(), jet.units, gammas)
    j0 = convective_current(jet, potential, gammas)
    spin = spin_current(jet, gammas)
    scale = float(np.max(np.abs(iota.values)))
    checks = {"gordon": residual_check("gordon", iota.values - j0.values - spin.values, grid, scale)}

    mad = decompose(jet.spinor(), jet.units.hbar)
    pg = phase_gradient(jet, floor)
    fluxes = component_fluxes(mad, pg, potential, jet.units)
    any_mask = np.any(pg.mask, axis=0)
    j0_scale = float(np.max(np.abs(j0.values)))
    # sum of fluxes vs j0 where every component is unmasked; masked components
    # are excluded from both sides so the comparison is on equal footing
    j0_unmasked = j0_from_components(jet, potential, mask=pg.mask)
    flux_sum = sum(f.values for f in fluxes)
    checks["flux_sum"] = residual_check("flux_sum", flux_sum - j0_unmasked, grid, j0_scale)
    checks["flux_sum_all_clear"] = residual_check("flux_sum_all_clear", flux_sum - j0.values, grid,
                                                  j0_scale, mask=np.broadcast_to(any_mask, (4, *grid.shape)))
    bundle = CurrentBundle(iota, j0, spin, fluxes, pg.mask, checks)
    if tol is not None and checks["gordon"].relative > tol:
        raise IdentityViolation(checks["gordon"], tol)
    return bundle


def j0_from_components(jet: SpinorJet, potential: FourPotential, mask=None) -> np.ndarray:
    """Component-wise bilinear form of j0, optionally dropping masked components."""
    u = jet.units
    Amu = potential.four_potential(jet.t)
    out = np.zeros((4, *jet.grid.shape))
    for i in range(4):
        s = PHASE_SIGNS[i]
        psi_i = jet.psi[i]
        rho = np.abs(psi_i) ** 2
        for mu in range(4):
            term = (-s * u.hbar * METRIC[mu, mu] * np.imag(np.conj(psi_i) * jet.d(mu)[i])
                    - s * u.q / u.c * rho * Amu[mu]) / u.m
            if mask is not None:
                term = np.where(mask[i], 0.0, term)
            out[mu] += term
    return out


def component_fluxes(mad: MadelungData, pg: PhaseGradientField, potential: FourPotential,
                     units: UnitsConfig) -> list[FourVectorField]:
    """j0_i^mu = rho_i (-d^mu S_i -+ (q/c) A^mu) / m, minus sign for i = 1, 2; zero on masks."""
    Amu = potential.four_potential(pg.t)
    up = pg.raised()
    out = []
    for i in range(4):
        s = PHASE_SIGNS[i]
        vals = mad.rho[i] * (-up[i] - s * units.q / units.c * Amu) / units.m
        vals = np.where(pg.mask[i], 0.0, vals)
        out.append(FourVectorField(mad.grid, vals, pg.t))
    return out


# -- continuity --------------------------------------------------------------

def continuity_residual(run: RunRecord, method: str = "generator", gammas: GammaSet = GAMMA) -> dict:
    """Per-snapshot max |d_mu iota^mu| and max |d_mu j0^mu|.

    ``method="generator"`` uses the Dirac Hamiltonian for time derivatives;
    ``"history"`` differences the snapshot series (second order, needs >= 3).
    """
    snaps = run.snapshots
    if len(snaps) < 3:
        raise ValueError("continuity_residual needs at least 3 snapshots")
    iota_max, j0_max, scale = [], [], []
    if method == "generator":
        for s in snaps:
            jet = jet_from_generator(s, run.potential)
            iota_max.append(float(np.max(np.abs(div_dirac_current(jet, gammas)))))
            j0_max.append(float(np.max(np.abs(div_convective_current(jet, run.potential, gammas)))))
            scale.append(float(np.max(run.units.c * s.density())))
    elif method == "history":
        from .numerics import four_divergence_series

        h = run.snapshot_dt
        iotas = [dirac_current(s, run.units, gammas) for s in snaps]
        j0s = [convective_current(jet_from_history(snaps, i, h, run.units), run.potential, gammas)
               for i in range(len(snaps))]
        di = four_divergence_series(iotas, h, c=run.units.c)
        dj = four_divergence_series(j0s, h, c=run.units.c)
        iota_max = [float(np.max(np.abs(x))) for x in di]
        j0_max = [float(np.max(np.abs(x))) for x in dj]
        scale = [float(np.max(np.abs(x.values[0]))) for x in iotas]
    else:
        raise ValueError(f"unknown method {method!r}")
    return {"t": run.times, "iota": np.array(iota_max), "j0": np.array(j0_max), "iota0_max": np.array(scale)}


# -- sigma.E source terms and the imaginary / real part identities -----------

@dataclass
class ZitterSources:
    re_part: np.ndarray
    im_part: np.ndarray
    E: np.ndarray
    H: np.ndarray
    phi_H_phi: np.ndarray
    chi_H_chi: np.ndarray
    re_part_lower: np.ndarray
    im_part_lower: np.ndarray


def sigma_dot(vec: np.ndarray) -> np.ndarray:
    """Pointwise 2x2 matrix sigma.vec, shape (2, 2, *grid)."""
    return sum(np.einsum("ij,...->ij...", PAULI[k + 1], vec[k]) for k in range(3))


def zitter_sources(psi: SpinorField, potential: FourPotential) -> ZitterSources:
    E, H = potential.field_strengths(psi.t)
    phi, chi = psi.values[:2], psi.values[2:]
    sE, sH = sigma_dot(E), sigma_dot(H)
    cross = 1j * np.sum(np.conj(phi) * apply_matrix(sE, chi), axis=0)
    cross_lower = 1j * np.sum(np.conj(chi) * apply_matrix(sE, phi), axis=0)
    return ZitterSources(
        re_part=np.real(cross), im_part=np.imag(cross), E=E, H=H,
        phi_H_phi=np.real(np.sum(np.conj(phi) * apply_matrix(sH, phi), axis=0)),
        chi_H_chi=np.real(np.sum(np.conj(chi) * apply_matrix(sH, chi), axis=0)),
        re_part_lower=np.real(cross_lower), im_part_lower=np.imag(cross_lower),
    )


def component_flux_divergence(jet: SpinorJet, potential: FourPotential) -> np.ndarray:
    """d_mu (m j0_i^mu) for each component, from the jet (shape (4, *grid))."""
    u = jet.units
    Amu = potential.four_potential(jet.t)
    dA = potential.lorentz_residual(jet.t)
    out = np.empty((4, *jet.grid.shape))
    for i in range(4):
        s = PHASE_SIGNS[i]
        psi_i = jet.psi[i]
        box = sum(METRIC[mu, mu] * np.conj(psi_i) * jet.dd(mu, mu)[i] for mu in range(4))
        drho_A = sum(2 * np.real(np.conj(psi_i) * jet.d(mu)[i]) * Amu[mu] for mu in range(4))
        out[i] = -s * u.hbar * np.imag(box) - s * u.q / u.c * (drho_A + np.abs(psi_i) ** 2 * dA)
    return out


def imag_part_identity(jet: SpinorJet, potential: FourPotential) -> dict:
    """Upper/lower flux divergences against +-(q/c) Im(i phi^dag sigma.E chi).

    The lower check is evaluated with the right-hand side exactly as printed
    (phi before chi) and also with the chi-before-phi ordering; for hermitian
    sigma.E the two coincide, which is reported as ``lower_ordering_gap``.
    """
    u = jet.units
    src = zitter_sources(jet.spinor(), potential)
    div = component_flux_divergence(jet, potential)
    up, lo = div[0] + div[1], div[2] + div[3]
    rhs = u.q / u.c * src.im_part
    rhs_lower_alt = -u.q / u.c * src.im_part_lower
    grid = jet.grid
    # when both sides vanish identically, measure against the size of the
    # terms that cancel inside the divergence
    terms = sum(u.hbar * np.abs(jet.psi[i]) * np.abs(sum(jet.dd(mu, mu)[i] for mu in range(4)))
                for i in range(4))
    scale = max(float(np.max(np.abs(up))), float(np.max(np.abs(rhs))), 1e-6 * float(np.max(terms)))
    return {
        "upper": residual_check("imag_part_upper", up - rhs, grid, scale),
        "lower": residual_check("imag_part_lower", lo + rhs, grid, scale),
        "lower_alt_ordering": residual_check("imag_part_lower_alt", lo - rhs_lower_alt, grid, scale),
        "lower_ordering_gap": residual_check("lower_ordering_gap", rhs + rhs_lower_alt, grid, scale),
        "sum": residual_check("imag_part_sum", up + lo, grid, scale),
        "div_upper": up, "div_lower": lo, "rhs": rhs,
    }


def sqrt_rho_box(jet: SpinorJet, floor: float) -> tuple[np.ndarray, np.ndarray]:
    """sqrt(rho_i) box sqrt(rho_i) = box(rho)/2 - d rho . d rho / (4 rho), masked."""
    out = np.zeros((4, *jet.grid.shape))
    mask = np.abs(jet.psi) ** 2 <= floor
    for i in range(4):
        p = jet.psi[i]
        rho = np.abs(p) ** 2
        drho = [2 * np.real(np.conj(p) * jet.d(mu)[i]) for mu in range(4)]
        box = sum(METRIC[mu, mu] * 2 * np.real(np.conj(p) * jet.dd(mu, mu)[i] + np.abs(jet.d(mu)[i]) ** 2)
                  for mu in range(4))
        dd = sum(METRIC[mu, mu] * drho[mu] ** 2 for mu in range(4))
        out[i] = np.where(mask[i], 0.0, 0.5 * box - dd / (4 * np.where(mask[i], 1.0, rho)))
    return out, mask


def real_part_identity(jet: SpinorJet, potential: FourPotential, floor: float | None = None,
                       magnetic_sign: float = 1.0) -> dict:
    """Residuals of the real-part (eikonal) balance for the upper and lower pairs.

    ``magnetic_sign=+1`` uses the sigma.H sign as printed; ``-1`` the sign that
    follows from H = curl A with F_ij = -eps_ijk H_k.  Both are reported by the
    pipeline.
    """
    u = jet.units
    rho = np.abs(jet.psi) ** 2
    if floor is None:
        floor = 1e-12 * float(np.max(rho))
    pg = phase_gradient(jet, floor)
    Amu = potential.four_potential(jet.t)
    src = zitter_sources(jet.spinor(), potential)
    rbox, mask = sqrt_rho_box(jet, floor)
    up = pg.raised()
    lhs = np.zeros((2, *jet.grid.shape))
    rhs = np.zeros((2, *jet.grid.shape))
    for i in range(4):
        s = PHASE_SIGNS[i]
        X = -up[i] - s * u.q / u.c * Amu
        sq = X[0] ** 2 - X[1] ** 2 - X[2] ** 2 - X[3] ** 2
        b = 0 if i < 2 else 1
        lhs[b] += np.where(mask[i], 0.0, rho[i] * (sq - (u.m * u.c) ** 2))
        rhs[b] += u.hbar**2 * rbox[i]
    k = u.hbar * u.q / u.c
    rhs[0] += magnetic_sign * k * src.phi_H_phi + k * src.re_part
    rhs[1] += magnetic_sign * k * src.chi_H_chi + k * src.re_part_lower
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-300)
    return {
        "upper": residual_check("real_part_upper", lhs[0] - rhs[0], jet.grid, scale),
        "lower": residual_check("real_part_lower", lhs[1] - rhs[1], jet.grid, scale),
        "lhs": lhs, "rhs": rhs,
    }
