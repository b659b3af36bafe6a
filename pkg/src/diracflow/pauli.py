"""Two-component Pauli equations for the upper (phi) and lower (chi) blocks.

    i hbar d_t phi = [ (p - qA/c)^2 / 2m + qV + b (hbar q / 2mc) sigma.H + U_phi ] phi
   -i hbar d_t chi = [ (p - qA/c)^2 / 2m - qV + b (hbar q / 2mc) sigma.H + U_chi ] chi

with b = ``magnetic_sign`` (+1 by default).  The chi equation runs on the
conjugate time convention, so chi is advanced with exp(+i H_chi dt / hbar).
``linear`` mode drops U; ``coupled`` mode keeps the sigma.E coupling terms.
The vector potential must be spatially uniform (a function of time only),
which keeps the kinetic substep exact in Fourier space.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dirac import RunRecord, StabilityError
from .numerics import PAULI, Grid, UnitsConfig, apply_matrix, gradient
from .potentials import FourPotential

MODES = ("linear", "coupled")


@dataclass
class PauliPair:
    grid: Grid
    phi: np.ndarray
    chi: np.ndarray
    t: float = 0.0
    mode: str = "linear"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        for name in ("phi", "chi"):
            arr = np.asarray(getattr(self, name), dtype=np.complex128)
            if arr.shape != (2, *self.grid.shape):
                raise ValueError(f"{name} must have shape (2, {self.grid.shape})")
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"{name} contains non-finite values")
            setattr(self, name, arr)

    def norms(self) -> tuple[float, float]:
        return (self.grid.integrate(np.sum(np.abs(self.phi) ** 2, axis=0)),
                self.grid.integrate(np.sum(np.abs(self.chi) ** 2, axis=0)))

    def copy(self) -> "PauliPair":
        return PauliPair(self.grid, self.phi.copy(), self.chi.copy(), self.t, self.mode)


def _sigma(vec: np.ndarray) -> np.ndarray:
    return sum(np.einsum("ij,...->ij...", PAULI[k + 1], vec[k]) for k in range(3))


def u_terms(phi: np.ndarray, chi: np.ndarray, E: np.ndarray, units: UnitsConfig,
            floor: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """U_phi and U_chi: (hbar q / 2mc) Re(phi^dag sigma.E chi) over phi^dag phi and chi^dag chi.

    Both use the phi-before-chi numerator; zero where the denominator is at or
    below ``floor`` (default 1e-12 of the larger block peak).
    """
    num = units.hbar * units.q / (2 * units.m * units.c) * np.real(
        np.sum(np.conj(phi) * apply_matrix(_sigma(E), chi), axis=0))
    rp = np.sum(np.abs(phi) ** 2, axis=0)
    rc = np.sum(np.abs(chi) ** 2, axis=0)
    if floor is None:
        floor = 1e-12 * max(float(np.max(rp)), float(np.max(rc)), 1e-300)
    up = np.where(rp > floor, num / np.where(rp > floor, rp, 1.0), 0.0)
    uc = np.where(rc > floor, num / np.where(rc > floor, rc, 1.0), 0.0)
    return up, uc


def _su2(b: np.ndarray, tau: float) -> np.ndarray:
    """exp(-i tau sigma.b), shape (2, 2, *grid)."""
    mag = np.sqrt(np.sum(b**2, axis=0))
    cos = np.cos(mag * tau)
    s = tau * np.sinc(mag * tau / np.pi)
    out = np.einsum("ij,...->ij...", np.eye(2, dtype=np.complex128), cos)
    for k in range(3):
        out = out - 1j * np.einsum("ij,...->ij...", PAULI[k + 1], s * b[k])
    return out


def _check_uniform_A(potential: FourPotential, t: float) -> np.ndarray:
    A = potential.A(t)
    flat = A.reshape(3, -1)
    if np.any(np.ptp(flat, axis=1) > 1e-12 * (1 + np.max(np.abs(flat)))):
        raise ValueError("the Pauli solver needs a spatially uniform vector potential")
    return flat[:, 0].copy()


@dataclass
class PauliConfig:
    dt: float
    nsteps: int
    stride: int = 1
    mode: str = "linear"
    magnetic_sign: float = 1.0
    guard: str = "warn"
    floor: float | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.nsteps < 0 or self.stride < 1:
            raise ValueError("dt must be positive, nsteps >= 0, stride >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.magnetic_sign not in (1.0, -1.0, 1, -1):
            raise ValueError("magnetic_sign must be +1 or -1")

    def to_dict(self) -> dict:
        return {"dt": self.dt, "nsteps": self.nsteps, "stride": self.stride, "mode": self.mode,
                "magnetic_sign": float(self.magnetic_sign), "guard": self.guard, "floor": self.floor}


class PauliStepper:
    def __init__(self, grid: Grid, potential: FourPotential, config: PauliConfig):
        u = potential.units
        self.grid, self.potential, self.config, self.units = grid, potential, config, u
        self.k = list(np.meshgrid(*grid.wavenumbers_1d, indexing="ij"))
        while len(self.k) < 3:
            self.k.append(np.zeros(grid.shape))
        _check_uniform_A(potential, 0.0)
        V0 = potential.V(0.0)
        H0 = potential.field_strengths(0.0)[1].reshape(3, -1)
        # uniform V and H commute with the kinetic factor, so the splitting is exact whatever its phase
        uniform = np.ptp(V0) == 0 and np.all(np.ptp(H0, axis=1) <= 1e-12 * (1 + np.max(np.abs(H0))))
        kin = 0.0 if uniform and config.mode == "linear" else u.hbar * grid.k_max**2 / (2 * u.m) * grid.dim
        spin = abs(u.q) * float(np.linalg.norm(H0, axis=0).max()) / (2 * u.m * u.c)
        phase = config.dt * (kin + (abs(u.q) * potential.max_abs_V() + spin) / u.hbar)
        if phase > np.pi:
            msg = f"Pauli dt={config.dt} gives a phase of {phase:.3f} rad per step (> pi)"
            if config.guard == "refuse":
                raise StabilityError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        self._axes = tuple(range(1, 1 + grid.dim))

    def _local(self, pair: PauliPair, t: float, tau: float, U=None) -> tuple[np.ndarray, np.ndarray]:
        u, b = self.units, self.config.magnetic_sign
        V = self.potential.V(t)
        _, H = self.potential.field_strengths(t)
        bvec = b * u.hbar * u.q / (2 * u.m * u.c) * H / u.hbar
        phi, chi = pair.phi, pair.chi
        up, uc = (np.zeros(self.grid.shape),) * 2 if U is None else U
        phi = apply_matrix(_su2(bvec, tau), phi) * np.exp(-1j * (u.q * V + up) * tau / u.hbar)
        # conjugate time convention: exp(+i H_chi tau)
        chi = apply_matrix(_su2(-bvec, tau), chi) * np.exp(1j * (-u.q * V + uc) * tau / u.hbar)
        return phi, chi

    def _u(self, phi, chi, t):
        E, _ = self.potential.field_strengths(t)
        return u_terms(phi, chi, E, self.units, self.config.floor)

    def _half(self, pair: PauliPair, t: float) -> PauliPair:
        tau = 0.5 * self.config.dt
        if pair.mode == "linear":
            phi, chi = self._local(pair, t, tau)
        else:
            U0 = self._u(pair.phi, pair.chi, t)
            trial = PauliPair(self.grid, *self._local(pair, t, tau, U0), pair.t, pair.mode)
            U1 = self._u(trial.phi, trial.chi, t)
            Um = (0.5 * (U0[0] + U1[0]), 0.5 * (U0[1] + U1[1]))
            phi, chi = self._local(pair, t, tau, Um)
        return PauliPair(self.grid, phi, chi, pair.t, pair.mode)

    def _kinetic(self, pair: PauliPair, t: float) -> PauliPair:
        u = self.units
        A = _check_uniform_A(self.potential, t)
        pk2 = sum((u.hbar * self.k[a] - u.q / u.c * A[a]) ** 2 for a in range(3))
        w = pk2 / (2 * u.m) * self.config.dt / u.hbar
        phi = np.fft.ifftn(np.exp(-1j * w) * np.fft.fftn(pair.phi, axes=self._axes), axes=self._axes)
        chi = np.fft.ifftn(np.exp(1j * w) * np.fft.fftn(pair.chi, axes=self._axes), axes=self._axes)
        return PauliPair(self.grid, phi, chi, pair.t, pair.mode)

    def step(self, pair: PauliPair) -> PauliPair:
        dt, t = self.config.dt, pair.t
        p = self._half(pair, t + 0.25 * dt)
        p = self._kinetic(p, t + 0.5 * dt)
        p = self._half(p, t + 0.75 * dt)
        p.t = t + dt
        return p


def pauli_step(pair: PauliPair, potential: FourPotential, dt: float, magnetic_sign: float = 1.0) -> PauliPair:
    cfg = PauliConfig(dt, 1, mode=pair.mode, magnetic_sign=magnetic_sign)
    return PauliStepper(pair.grid, potential, cfg).step(pair)


@dataclass
class PauliRun:
    grid: Grid
    units: UnitsConfig
    potential: FourPotential
    config: PauliConfig
    snapshots: list[PauliPair] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])


def evolve_pauli(pair0: PauliPair, potential: FourPotential, config: PauliConfig, observer=None) -> PauliRun:
    if pair0.mode != config.mode:
        pair0 = PauliPair(pair0.grid, pair0.phi, pair0.chi, pair0.t, config.mode)
    stepper = PauliStepper(pair0.grid, potential, config)
    run = PauliRun(pair0.grid, potential.units, potential, config, [pair0.copy()])
    p = pair0
    for n in range(1, config.nsteps + 1):
        p = stepper.step(p)
        if observer is not None:
            observer(p)
        if n % config.stride == 0:
            run.snapshots.append(p.copy())
    return run


def spin_expectation(pair: PauliPair) -> np.ndarray:
    """(<sigma_x>, <sigma_y>, <sigma_z>) of phi, normalised by its norm."""
    rho = np.sum(np.abs(pair.phi) ** 2, axis=0)
    norm = pair.grid.integrate(rho)
    return np.array([pair.grid.integrate(np.real(np.sum(np.conj(pair.phi) * apply_matrix(PAULI[k], pair.phi),
                                                       axis=0))) / norm for k in (1, 2, 3)])


def compare_dirac_pauli(dirac: RunRecord, pauli: PauliRun) -> dict:
    """Upper-block density and current differences per shared snapshot time.

    The Dirac upper block carries the rest phase exp(-i m c^2 t / hbar); it
    drops out of densities and of Im(phi^dag grad phi), which is what is
    compared for the phase gradient.
    """
    if dirac.grid != pauli.grid:
        raise ValueError("Dirac and Pauli runs must share a grid")
    grid = dirac.grid
    td, tp = dirac.times, pauli.times
    rows = []
    for i, t in enumerate(td):
        j = np.flatnonzero(np.abs(tp - t) <= 1e-9 * max(1.0, abs(t)))
        if j.size == 0:
            continue
        phd = dirac.snapshots[i].values[:2]
        php = pauli.snapshots[int(j[0])].phi
        rd = np.sum(np.abs(phd) ** 2, axis=0)
        rp = np.sum(np.abs(php) ** 2, axis=0)
        jd = np.sum(np.imag(np.conj(phd)[None] * gradient(phd, grid)), axis=1)
        jp = np.sum(np.imag(np.conj(php)[None] * gradient(php, grid)), axis=1)
        E, _ = dirac.potential.field_strengths(t)
        chi = dirac.snapshots[i].values[2:]
        zb = np.abs(dirac.units.q / dirac.units.c * np.sum(np.conj(chi) * apply_matrix(_sigma(E), phd), axis=0))
        rows.append({
            "t": float(t),
            "density_l2": float(np.sqrt(grid.integrate((rd - rp) ** 2))),
            "density_max": float(np.max(np.abs(rd - rp))),
            "current_max": float(np.max(np.abs(jd - jp))),
            "zitter_max": float(np.max(zb)),
        })
    if not rows:
        raise ValueError("the runs share no snapshot times")
    return {"per_snapshot": rows,
            "density_l2_max": max(r["density_l2"] for r in rows),
            "density_max": max(r["density_max"] for r in rows),
            "current_max": max(r["current_max"] for r in rows),
            "zitter_max": max(r["zitter_max"] for r in rows)}
