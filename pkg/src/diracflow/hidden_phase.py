"""Hidden phases that put each component's four-velocity on the mass shell.

Each component i gets a phase Phi_i with Phi_i(0) = 0, chosen so that

    m v_i^mu = -d^mu (S_i + Phi_i) - s_i (q/c) A^mu,   s = (+1, +1, -1, -1)

satisfies v_i . v_i = c^2 with v_i^0 > 0.  Solving the constraint for the
time derivative gives a Hamilton-Jacobi equation for Phi_i, integrated here
by the method of lines (classical RK4 in time, spectral gradients in space).
Stage data at intermediate times come from re-running the Dirac stepper from
the nearest stored snapshot, so the Dirac run itself needs no extra storage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .currents import real_part_identity
from .dirac import DiracStepper, RunRecord, SpinorJet, jet_from_generator
from .madelung import PHASE_SIGNS, default_floor
from .numerics import METRIC, FourVectorField, Grid, SpinorField, divergence, gradient
from .potentials import FourPotential

CFL_LIMIT = 0.8
MASK_GROWTH_LIMIT = 0.10
# exp(-alpha (k/k_max)^order) low-pass on the extended Phi before
# differentiating; order 16 leaves k < k_max/4 untouched to ~1e-8
FILTER_ALPHA = 36.0
FILTER_ORDER = 16


class PhiGuardError(ValueError):
    pass


class MaskGrowthError(RuntimeError):
    pass


@dataclass
class PhaseJet:
    """Covariant first and second derivatives of S_i from a spinor jet.

    ``d[i, mu] = d_mu S_i`` and ``dd[i, mu, nu] = d_mu d_nu S_i``; both are
    zero on masked points.
    """

    rho: np.ndarray
    rho_d: np.ndarray
    d: np.ndarray
    dd: np.ndarray
    mask: np.ndarray


def phase_jet(jet: SpinorJet, floor: float, second: bool = False) -> PhaseJet:
    shape = jet.grid.shape
    rho = np.abs(jet.psi) ** 2
    mask = rho <= floor
    safe = np.where(mask, 1.0, jet.psi)
    sg = PHASE_SIGNS.reshape(4, *([1] * jet.grid.dim)) * jet.units.hbar
    first = [jet.d(mu) for mu in range(4)]
    d = np.empty((4, 4, *shape))
    rho_d = np.empty((4, 4, *shape))
    for mu in range(4):
        d[:, mu] = np.where(mask, 0.0, sg * np.imag(first[mu] / safe))
        rho_d[:, mu] = 2 * np.real(np.conj(jet.psi) * first[mu])
    dd = None
    if second:
        dd = np.empty((4, 4, 4, *shape))
        for mu in range(4):
            for nu in range(mu, 4):
                val = sg * np.imag(jet.dd(mu, nu) / safe - first[mu] * first[nu] / safe**2)
                dd[:, mu, nu] = dd[:, nu, mu] = np.where(mask, 0.0, val)
    return PhaseJet(rho, rho_d, d, dd, mask)


def _kinetic(P: np.ndarray, units) -> np.ndarray:
    return np.sqrt((units.m * units.c) ** 2 + np.sum(P**2, axis=0))


def extend_over_mask(f: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Copy of ``f`` with masked points set to the nearest unmasked value.

    Spectral gradients of a field with a jump at the mask edge ring (Gibbs)
    and the ringing feeds back through the square root; a continuous
    extension keeps the unmasked gradient clean.
    """
    if not mask.any() or mask.all():
        return f
    idx = ndimage.distance_transform_edt(mask, return_distances=False, return_indices=True)
    return f[tuple(idx)]


def _filter(grid: Grid) -> np.ndarray:
    k = np.meshgrid(*grid.wavenumbers_1d, indexing="ij")
    r = np.sqrt(sum((ki * dx / np.pi) ** 2 for ki, dx in zip(k, grid.spacing)))
    return np.exp(-FILTER_ALPHA * np.minimum(r, 1.0) ** FILTER_ORDER)


def phase_gradient_of(phi: np.ndarray, mask: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient of Phi, continuous across masks and smoothly band-limited.

    The kink an extension leaves at a mask edge would otherwise spread through
    the whole domain with the slowly decaying tail of the sharp spectral cut.
    """
    f = extend_over_mask(phi, mask)
    f = np.real(np.fft.ifftn(np.fft.fftn(f) * _filter(grid)))
    return gradient(f, grid)


def phi_time_derivative(phi: np.ndarray, pj: PhaseJet, potential: FourPotential, t: float,
                        grid: Grid, units) -> np.ndarray:
    """dPhi_i/dt = -dS_i/dt - s_i q V - c sqrt(m^2 c^2 + |P_i|^2), zero on masks.

    P_i = grad(S_i + Phi_i) - s_i (q/c) A.  The positive root keeps v_i^0 > 0.
    """
    c, q = units.c, units.q
    V, A = potential.V(t), potential.A(t)
    out = np.empty((4, *grid.shape))
    for i in range(4):
        s = PHASE_SIGNS[i]
        P = pj.d[i, 1:] + phase_gradient_of(phi[i], pj.mask[i], grid) - s * q / c * A
        val = -c * pj.d[i, 0] - s * q * V - c * _kinetic(P, units)
        out[i] = np.where(pj.mask[i], 0.0, val)
    return out


def four_velocity(dphase: np.ndarray, potential: FourPotential, t: float, sign: float, units,
                  mask: np.ndarray | None = None) -> FourVectorField:
    """m v^mu = -d^mu phase - s (q/c) A^mu from the covariant gradient of S + Phi."""
    Amu = potential.four_potential(t)
    up = METRIC.diagonal().reshape(4, *([1] * potential.grid.dim)) * dphase
    v = (-up - sign * units.q / units.c * Amu) / units.m
    if mask is not None:
        v = np.where(mask, 0.0, v)
    return FourVectorField(potential.grid, v, t)


def normalization_residual(v: FourVectorField, units, mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """(v.v - c^2)/c^2 as a field and its max magnitude over unmasked points."""
    res = (v.square() - units.c**2) / units.c**2
    if mask is not None:
        res = np.where(mask, 0.0, res)
    return float(np.max(np.abs(res))), res


@dataclass
class HiddenPhaseSet:
    t: float
    phi: np.ndarray
    phi_t: np.ndarray
    v: list[FourVectorField]
    rho: np.ndarray
    mask: np.ndarray
    residual: float
    signs: np.ndarray = field(default_factory=lambda: PHASE_SIGNS.copy())

    @property
    def min_v0(self) -> float:
        vals = [np.min(np.where(self.mask[i], np.inf, self.v[i].values[0])) for i in range(4)]
        return float(min(vals))


@dataclass
class PhiConfig:
    substeps: int | None = None
    cfl: float = CFL_LIMIT
    floor: float | None = None
    mask_growth: float = MASK_GROWTH_LIMIT

    def to_dict(self) -> dict:
        return {"substeps": self.substeps, "cfl": self.cfl, "floor": self.floor, "mask_growth": self.mask_growth}


@dataclass
class PhiRun:
    run: RunRecord
    series: list[HiddenPhaseSet]
    potential: FourPotential
    config: PhiConfig
    floor: float
    h: float
    history_gap: float = float("nan")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.series])

    @property
    def max_residual(self) -> float:
        return max(s.residual for s in self.series)

    def summary(self) -> dict:
        return {"h": self.h, "floor": self.floor, "max_normalization_residual": self.max_residual,
                "min_v0": min(s.min_v0 for s in self.series), "max_abs_phi": float(max(np.max(np.abs(s.phi)) for s in self.series)),
                "history_gap": self.history_gap, "config": self.config.to_dict()}


class _StageSource:
    """Spinor at t_k + j h/2 obtained by stepping from snapshot k."""

    def __init__(self, run: RunRecord, h: float):
        half = h / 2
        dt = run.config.dt
        n = max(1, math.ceil(half / dt - 1e-9))
        self.sub_dt = half / n
        self.n = n
        self.stepper = DiracStepper(run.grid, run.potential, self.sub_dt, guard=run.config.guard)
        self.run = run

    def states(self, snap: SpinorField, count: int) -> list[SpinorField]:
        """``count`` states spaced by h/2 starting after ``snap``."""
        out = []
        psi, t = snap.values, snap.t
        for _ in range(count):
            for _ in range(self.n):
                psi = self.stepper.step(psi, t)
                t += self.sub_dt
            out.append(SpinorField(snap.grid, psi, t))
        return out


def evolve_phi(run: RunRecord, phi0: np.ndarray | None = None, config: PhiConfig | None = None,
               analysis_potential: FourPotential | None = None) -> PhiRun:
    """Integrate the hidden phases along a Dirac run, one entry per snapshot.

    ``analysis_potential`` replaces the four-potential in the Hamilton-Jacobi
    right-hand side and in v (the spinor dynamics always use the run's own).
    """
    config = config or PhiConfig()
    grid, units = run.grid, run.units
    pot = analysis_potential or run.potential
    snaps = run.snapshots
    if len(snaps) < 2:
        raise ValueError("evolve_phi needs at least two snapshots")
    delta = run.snapshot_dt
    dx = min(grid.spacing)
    if config.substeps is None:
        n_sub = max(1, math.ceil(units.c * delta / (config.cfl * dx) - 1e-12))
    else:
        n_sub = int(config.substeps)
    h = delta / n_sub
    if units.c * h / dx > config.cfl * (1 + 1e-12):
        raise PhiGuardError(f"c*h/dx = {units.c * h / dx:.3f} exceeds {config.cfl} (h={h:.3g}, dx={dx:.3g}); "
                            f"raise substeps")
    floor = config.floor if config.floor is not None else default_floor(snaps[0].density())
    if not floor > 0:
        raise ValueError("the density floor must be positive")
    source = _StageSource(run, h)
    phi = np.zeros((4, *grid.shape)) if phi0 is None else np.array(phi0, dtype=float)
    base_frac = None

    def rhs(snap: SpinorField, phi_now):
        nonlocal base_frac
        pj = phase_jet(jet_from_generator(snap, run.potential), floor)
        frac = pj.mask.reshape(4, -1).mean(axis=1)
        if base_frac is None:
            base_frac = frac
        grown = frac - base_frac
        if np.any(grown > config.mask_growth):
            i = int(np.argmax(grown))
            raise MaskGrowthError(f"component {i + 1} masked fraction grew from {base_frac[i]:.3f} to "
                                  f"{frac[i]:.3f} at t={snap.t:.6g} (limit +{config.mask_growth:.2f})")
        return phi_time_derivative(phi_now, pj, pot, snap.t, grid, units), pj

    def entry(snap, phi_now):
        k, pj = rhs(snap, phi_now)
        return _build_set(snap.t, phi_now, k, pj, pot, grid, units)

    series = [entry(snaps[0], phi)]
    seen = ~series[0].mask
    for idx in range(len(snaps) - 1):
        state = snaps[idx]
        for _ in range(n_sub):
            mid, end = source.states(state, 2)
            k1, pj = rhs(state, phi)
            k2, _ = rhs(mid, phi + h / 2 * k1)
            k3, _ = rhs(mid, phi + h / 2 * k2)
            k4, pj_end = rhs(end, phi + h * k3)
            phi = phi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            phi = _seed_unseen(phi, seen, pj_end.mask)
            seen |= ~pj_end.mask
            state = end
        series.append(entry(snaps[idx + 1], phi))
    out = PhiRun(run, series, pot, config, float(floor), h)
    out.history_gap = _history_gap(series, delta)
    return out


def _seed_unseen(phi: np.ndarray, seen: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Points never unmasked so far take the continuous extension of Phi.

    A point that re-emerges keeps its frozen value; one that emerges for the
    first time has no history, and a zero there would sit next to neighbours
    that have accumulated phase.
    """
    out = phi.copy()
    for i in range(4):
        unseen = ~seen[i] & mask[i]
        if unseen.any() and seen[i].any():
            ext = extend_over_mask(phi[i], ~seen[i])
            out[i] = np.where(unseen, ext, phi[i])
    return out


def _build_set(t, phi, phi_t, pj: PhaseJet, pot, grid, units) -> HiddenPhaseSet:
    vs = []
    res = 0.0
    for i in range(4):
        dphase = pj.d[i].copy()
        dphase[0] += phi_t[i] / units.c
        dphase[1:] += phase_gradient_of(phi[i], pj.mask[i], grid)
        v = four_velocity(dphase, pot, t, PHASE_SIGNS[i], units, pj.mask[i])
        vs.append(v)
        res = max(res, normalization_residual(v, units, pj.mask[i])[0])
    return HiddenPhaseSet(t, phi.copy(), phi_t, vs, pj.rho, pj.mask, res)


def _history_gap(series: list[HiddenPhaseSet], delta: float) -> float:
    """Max |dPhi/dt (RHS) - centred difference of stored Phi|, a consistency diagnostic."""
    if len(series) < 3:
        return float("nan")
    gap = 0.0
    for k in range(1, len(series) - 1):
        fd = (series[k + 1].phi - series[k - 1].phi) / (2 * delta)
        steady = ~(series[k - 1].mask | series[k].mask | series[k + 1].mask)
        gap = max(gap, float(np.max(np.abs(np.where(steady, fd - series[k].phi_t, 0.0)))))
    return gap


def uncorrected_velocities(snap: SpinorField, potential: FourPotential, floor: float | None = None):
    """w_i (Phi = 0) and their worst normalization residual."""
    jet = jet_from_generator(snap, potential)
    if floor is None:
        floor = default_floor(snap.density())
    pj = phase_jet(jet, floor)
    ws = [four_velocity(pj.d[i], potential, snap.t, PHASE_SIGNS[i], potential.units, pj.mask[i])
          for i in range(4)]
    res = max(normalization_residual(w, potential.units, pj.mask[i])[0] for i, w in enumerate(ws))
    return ws, res


def particle_current(hps: HiddenPhaseSet) -> FourVectorField:
    """j^mu = sum_i rho_i v_i^mu."""
    vals = sum(np.where(hps.mask[i], 0.0, hps.rho[i]) * hps.v[i].values for i in range(4))
    return FourVectorField(hps.v[0].grid, vals, hps.t)


# -- number non-conservation -------------------------------------------------

@dataclass
class ConservationReport:
    t: np.ndarray
    particle_divergence: list[np.ndarray]
    direct_divergence: list[np.ndarray]
    charge_residual: list[np.ndarray]
    component_terms: list[np.ndarray]
    totals: dict
    mismatch: dict

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "totals": self.totals, "mismatch": self.mismatch}


def _fd_weights(n: int, k: int):
    """Centred first-derivative stencil at index k: 5-point interior, 3-point near edges."""
    if 2 <= k <= n - 3:
        return [k - 2, k - 1, k + 1, k + 2], np.array([1, -8, 8, -1]) / 12.0
    if 1 <= k <= n - 2:
        return [k - 1, k + 1], np.array([-0.5, 0.5])
    raise ValueError("time derivative needs neighbours on both sides")


def component_particle_divergence(jet: SpinorJet, phi: np.ndarray, phi_t: np.ndarray,
                                  potential: FourPotential, floor: float) -> np.ndarray:
    """d^mu(rho_i d_mu Phi_i) per component, with d_t^2 Phi from the jet.

    Differentiating the Hamilton-Jacobi right-hand side once more in time
    needs d_t^2 S and d_t grad S, which the generator jet supplies.
    """
    grid, units = jet.grid, jet.units
    c, q = units.c, units.q
    pj = phase_jet(jet, floor, second=True)
    A, A_t, V_t = potential.A(jet.t), potential.A_t(jet.t), potential.V_t(jet.t)
    out = np.empty((4, *grid.shape))
    for i in range(4):
        s = PHASE_SIGNS[i]
        gphi = phase_gradient_of(phi[i], pj.mask[i], grid)
        gphi_t = phase_gradient_of(phi_t[i], pj.mask[i], grid)
        P = pj.d[i, 1:] + gphi - s * q / c * A
        P_t = c * pj.dd[i, 0, 1:] + gphi_t - s * q / c * A_t
        phi_tt = -c * c * pj.dd[i, 0, 0] - s * q * V_t - c * np.sum(P * P_t, axis=0) / _kinetic(P, units)
        phi_tt = np.where(pj.mask[i], 0.0, phi_tt)
        rho_t = c * pj.rho_d[i, 0]
        temporal = (rho_t * phi_t[i] + pj.rho[i] * phi_tt) / c**2
        out[i] = temporal - divergence(pj.rho[i] * gphi, grid)
    return out


def conservation_report(phirun: PhiRun, indices=None) -> ConservationReport:
    """Particle-number divergence two ways, plus the charge-constraint residual.

    ``particle_divergence`` is sum_i d^mu(rho_i d_mu Phi_i)/m from jets;
    ``direct_divergence`` differences j = sum rho_i v_i over the snapshot
    history (4th order in time) and takes spectral space divergences.
    Algebraically direct = -particle; ``mismatch`` reports both sign readings.
    """
    run, series = phirun.run, phirun.series
    units, grid = run.units, run.grid
    n = len(series)
    if n < 3:
        raise ValueError("conservation_report needs at least 3 snapshots")
    if indices is None:
        indices = list(range(2, n - 2)) if n >= 5 else list(range(1, n - 1))
    delta = run.snapshot_dt
    currents = [particle_current(s) for s in series]
    pd, dd, cr, terms = [], [], [], []
    for k in indices:
        s = series[k]
        jet = jet_from_generator(run.snapshots[k], run.potential)
        comp = component_particle_divergence(jet, s.phi, s.phi_t, phirun.potential, phirun.floor)
        terms.append(comp)
        pd.append(np.sum(comp, axis=0) / units.m)
        cr.append(comp[0] + comp[1] - comp[2] - comp[3])
        idx, w = _fd_weights(n, k)
        j0_t = sum(wi * currents[j].values[0] for j, wi in zip(idx, w)) / delta
        dd.append(j0_t / units.c + divergence(currents[k].values[1:], grid))
    scale = max(max(float(np.max(np.abs(x))) for x in dd), 1e-300)
    derived = max(float(np.max(np.abs(a + b))) for a, b in zip(dd, pd))
    printed = max(float(np.max(np.abs(a - b))) for a, b in zip(dd, pd))
    comp_scale = max(max(float(np.max(np.abs(x[0]))) for x in terms), 1e-300)
    totals = {
        "particle": [grid.integrate(x) for x in pd],
        "direct": [grid.integrate(x) for x in dd],
        "charge": [grid.integrate(x) for x in cr],
    }
    mismatch = {
        "scale": scale,
        "derived_sign": derived / scale,
        "printed_sign": printed / scale,
        "charge_max": max(float(np.max(np.abs(x))) for x in cr),
        "charge_relative": max(float(np.max(np.abs(x))) for x in cr) / comp_scale,
    }
    return ConservationReport(np.array([series[k].t for k in indices]), pd, dd, cr, terms, totals, mismatch)


def aggregate_real_part(phirun: PhiRun, index: int, magnetic_sign: float = 1.0) -> dict:
    """Residuals of the real-part balances rewritten in terms of v_i and Phi_i.

    sum_i rho_i (v_i . dPhi_i + dPhi_i . dPhi_i / 2m) against the quantum,
    magnetic and sigma.E terms divided by 2m, for the upper and the lower pair.
    """
    run = phirun.run
    units, grid = run.units, run.grid
    s = phirun.series[index]
    jet = jet_from_generator(run.snapshots[index], run.potential)
    rp = real_part_identity(jet, phirun.potential, phirun.floor, magnetic_sign)
    lhs = np.zeros((2, *grid.shape))
    for i in range(4):
        dphi = np.concatenate([(s.phi_t[i] / units.c)[None], phase_gradient_of(s.phi[i], s.mask[i], grid)])
        up = METRIC.diagonal().reshape(4, *([1] * grid.dim)) * dphi
        vd = np.sum(s.v[i].values * dphi, axis=0)
        dd = np.sum(up * dphi, axis=0)
        lhs[0 if i < 2 else 1] += np.where(s.mask[i], 0.0, s.rho[i] * (vd + dd / (2 * units.m)))
    rhs = rp["rhs"] / (2 * units.m)
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-300)
    return {"upper": float(np.max(np.abs(lhs[0] - rhs[0]))) / scale,
            "lower": float(np.max(np.abs(lhs[1] - rhs[1]))) / scale}
