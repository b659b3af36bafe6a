"""Strang-split spectral evolution of the Dirac equation in external potentials.

The Hamiltonian is ``H = c alpha.(p - q A / c) + beta m c^2 + q V``.  One step
is a half local step ``exp(-i dt/2 (qV - q alpha.A))``, a full free step
``exp(-i dt H0(k))`` done exactly in Fourier space, and another half local
step.  Both exponentials have closed forms because ``(alpha.n)^2 = 1`` and
``H0(k)^2 = E(k)^2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import GAMMA, Grid, SpinorField, UnitsConfig, apply_matrix, spectral_derivative
from .potentials import FourPotential

SPIN = {"up": np.array([1.0, 0.0]), "down": np.array([0.0, 1.0])}


class StabilityError(RuntimeError):
    pass


def _sigma_dot(vec) -> np.ndarray:
    from .numerics import PAULI

    return sum(PAULI[k + 1] * vec[k] for k in range(3))


def _momentum_index(grid: Grid, p, units: UnitsConfig) -> np.ndarray:
    p = np.zeros(3) if p is None else np.asarray(p, dtype=float).reshape(-1)
    if p.size < 3:
        p = np.concatenate([p, np.zeros(3 - p.size)])
    for ax in range(3):
        if ax >= grid.dim:
            continue
        n = p[ax] / units.hbar * grid.extents[ax] / (2 * np.pi)
        if abs(n - round(n)) > 1e-9:
            raise ValueError(
                f"momentum component {p[ax]} on axis {ax} is not on the wavenumber lattice "
                f"(multiples of {2 * np.pi * units.hbar / grid.extents[ax]:.6g})"
            )
    return p


def free_eigenspinor(p, branch: str, spin: str, units: UnitsConfig) -> np.ndarray:
    """Normalized eigenvector of H0(p) = c alpha.p + beta m c^2 for energy +-E(p)."""
    p = np.asarray(p, dtype=float).reshape(3)
    if spin not in SPIN:
        raise ValueError(f"spin must be 'up' or 'down', got {spin!r}")
    E = float(units.energy(p))
    mc2 = units.rest_energy
    norm = np.sqrt((E + mc2) / (2 * E))
    xi = SPIN[spin].astype(np.complex128)
    small = units.c * (_sigma_dot(p) @ xi) / (E + mc2)
    if branch == "positive":
        u = np.concatenate([xi, small])
    elif branch == "negative":
        u = np.concatenate([-small, xi])
    else:
        raise ValueError(f"branch must be 'positive' or 'negative', got {branch!r}")
    return norm * u


def init_plane_wave(grid: Grid, p, branch: str = "positive", spin: str = "up",
                    units: UnitsConfig | None = None) -> SpinorField:
    """Free-particle eigenstate with unit density at t = 0."""
    units = units or UnitsConfig()
    p = _momentum_index(grid, p, units)
    u = free_eigenspinor(p, branch, spin, units)
    phase = np.exp(1j * sum(p[ax] * grid.coords[ax] for ax in range(grid.dim)) / units.hbar)
    return SpinorField(grid, np.einsum("i,...->i...", u, phase))


def init_gaussian(grid: Grid, center, width: float, p0=None, weights=(1, 0, 0, 0),
                  units: UnitsConfig | None = None, project: str | None = None) -> SpinorField:
    """Normalized Gaussian packet; density standard deviation ``width`` per axis.

    ``project`` may be ``"positive"`` or ``"negative"`` to keep only that
    free-energy branch (projection done in Fourier space, then renormalized).
    """
    units = units or UnitsConfig()
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.size != grid.dim:
        raise ValueError("center needs one coordinate per grid axis")
    for ax in range(grid.dim):
        if width < 4 * grid.spacing[ax]:
            raise ValueError(
                f"width {width} is unresolvable: needs >= 4 grid spacings ({4 * grid.spacing[ax]:.4g})"
            )
        half = grid.extents[ax] / 2
        seam_gap = min(center[ax] + half, half - center[ax])
        if seam_gap < 5 * width:
            raise ValueError(f"packet center on axis {ax} is closer than 5 widths to the periodic seam")
    p0 = _momentum_index(grid, p0, units)
    w = np.asarray(weights, dtype=np.complex128)
    if w.shape != (4,) or not np.any(w):
        raise ValueError("weights must be four numbers, not all zero")
    # sum over periodic images so the envelope is smooth across the seam
    env = np.ones(grid.shape)
    for ax in range(grid.dim):
        L = grid.extents[ax]
        d = grid.coords[ax] - center[ax]
        env = env * sum(np.exp(-(d + n * L) ** 2 / (4 * width**2)) for n in range(-2, 3))
    env = env * np.exp(1j * sum(p0[ax] * grid.coords[ax] for ax in range(grid.dim)) / units.hbar)
    psi = np.einsum("i,...->i...", w, env)
    if project is not None:
        psi = project_branch(psi, grid, units, project)
    psi = psi / np.sqrt(grid.integrate(np.sum(np.abs(psi) ** 2, axis=0)))
    return SpinorField(grid, psi)


# -- operators ---------------------------------------------------------------

def _kvec(grid: Grid) -> list[np.ndarray]:
    return [grid.wavenumbers[ax] if ax < grid.dim else np.zeros(grid.shape) for ax in range(3)]


def free_hamiltonian_k(grid: Grid, units: UnitsConfig) -> tuple[np.ndarray, np.ndarray]:
    """H0(k) as a (4, 4, *grid) array and E(k)."""
    k = _kvec(grid)
    c, hbar = units.c, units.hbar
    H0 = np.einsum("ij,...->ij...", GAMMA.beta * units.rest_energy, np.ones(grid.shape))
    for ax in range(3):
        H0 = H0 + np.einsum("ij,...->ij...", GAMMA.alpha[ax], c * hbar * k[ax])
    E = np.sqrt(units.rest_energy**2 + (c * hbar) ** 2 * sum(kk**2 for kk in k))
    return H0, E


def project_branch(psi: np.ndarray, grid: Grid, units: UnitsConfig, branch: str) -> np.ndarray:
    H0, E = free_hamiltonian_k(grid, units)
    sign = {"positive": 1.0, "negative": -1.0}[branch]
    axes = tuple(range(1, 1 + grid.dim))
    psik = np.fft.fftn(psi, axes=axes)
    psik = 0.5 * (psik + sign * apply_matrix(H0, psik) / E)
    return np.fft.ifftn(psik, axes=axes)


def local_matrix(potential: FourPotential, t: float) -> np.ndarray:
    """Pointwise hermitian generator qV - q alpha.A."""
    q = potential.units.q
    V, A = potential.V(t), potential.A(t)
    M = np.einsum("ij,...->ij...", np.eye(4, dtype=np.complex128), q * V)
    for ax in range(3):
        M = M - np.einsum("ij,...->ij...", GAMMA.alpha[ax], q * A[ax])
    return M


def local_propagator(potential: FourPotential, t: float, tau: float) -> np.ndarray:
    """exp(-i tau (qV - q alpha.A)) in closed form, shape (4, 4, *grid)."""
    q = potential.units.q
    V, A = potential.V(t), np.asarray(potential.A(t))
    a = np.sqrt(np.sum(A**2, axis=0))
    theta = q * tau
    cos = np.cos(theta * a)
    # sin(theta a)/a written through sinc so that a = 0 is regular
    s = theta * np.sinc(theta * a / np.pi)
    U = np.einsum("ij,...->ij...", np.eye(4, dtype=np.complex128), cos)
    for ax in range(3):
        U = U + 1j * np.einsum("ij,...->ij...", GAMMA.alpha[ax], s * A[ax])
    return U * np.exp(-1j * q * V * tau)


def apply_hamiltonian(psi: np.ndarray, grid: Grid, potential: FourPotential, t: float,
                      _cache: dict | None = None) -> np.ndarray:
    units = potential.units
    H0, _ = free_hamiltonian_k(grid, units) if _cache is None else _cache["H0E"]
    axes = tuple(range(1, 1 + grid.dim))
    kin = np.fft.ifftn(apply_matrix(H0, np.fft.fftn(psi, axes=axes)), axes=axes)
    return kin + apply_matrix(local_matrix(potential, t), psi)


def apply_hamiltonian_t(psi: np.ndarray, potential: FourPotential, t: float) -> np.ndarray:
    """(dH/dt) psi = (q V_t - q alpha.A_t) psi."""
    if potential.static:
        return np.zeros_like(psi)
    q = potential.units.q
    Vt, At = potential.V_t(t), potential.A_t(t)
    out = q * Vt * psi
    for ax in range(3):
        out = out - q * At[ax] * apply_matrix(GAMMA.alpha[ax], psi)
    return out


@dataclass
class EvolverConfig:
    dt: float
    nsteps: int
    stride: int = 1
    guard: str = "warn"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.nsteps < 0 or self.stride < 1:
            raise ValueError("nsteps must be >= 0 and stride >= 1")
        if self.guard not in ("warn", "refuse"):
            raise ValueError("guard must be 'warn' or 'refuse'")

    def to_dict(self) -> dict:
        return {"dt": self.dt, "nsteps": self.nsteps, "stride": self.stride, "guard": self.guard}


def stability_phase(grid: Grid, potential: FourPotential, dt: float) -> float:
    u = potential.units
    return dt * (grid.k_max * u.c + u.rest_energy / u.hbar + abs(u.q) * potential.max_abs_V() / u.hbar)


def check_stability(grid: Grid, potential: FourPotential, dt: float, guard: str = "warn") -> float:
    phase = stability_phase(grid, potential, dt)
    if phase > np.pi / 2:
        msg = f"dt={dt} gives a phase of {phase:.3f} rad per substep (> pi/2)"
        if guard == "refuse":
            raise StabilityError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return phase


class DiracStepper:
    """Caches the free propagator for a fixed grid, units and dt."""

    def __init__(self, grid: Grid, potential: FourPotential, dt: float, guard: str = "warn"):
        if potential.has_background_field:
            raise ValueError("uniform background magnetic fields have no periodic vector potential; "
                             "the Dirac evolver cannot represent them")
        self.grid, self.potential, self.dt = grid, potential, dt
        check_stability(grid, potential, dt, guard)
        H0, E = free_hamiltonian_k(grid, potential.units)
        tau = dt / potential.units.hbar
        eye = np.einsum("ij,...->ij...", np.eye(4, dtype=np.complex128), np.ones(grid.shape))
        self.U0 = np.cos(E * tau) * eye - 1j * (np.sin(E * tau) / E) * H0
        self._axes = tuple(range(1, 1 + grid.dim))
        self._static_half = None
        if potential.static:
            self._static_half = local_propagator(potential, 0.0, 0.5 * tau)

    def _half(self, t_mid: float) -> np.ndarray:
        if self._static_half is not None:
            return self._static_half
        return local_propagator(self.potential, t_mid, 0.5 * self.dt / self.potential.units.hbar)

    def step(self, psi: np.ndarray, t: float) -> np.ndarray:
        dt = self.dt
        psi = apply_matrix(self._half(t + 0.25 * dt), psi)
        psik = np.fft.fftn(psi, axes=self._axes)
        psi = np.fft.ifftn(apply_matrix(self.U0, psik), axes=self._axes)
        return apply_matrix(self._half(t + 0.75 * dt), psi)


def dirac_step(psi: SpinorField, potential: FourPotential, dt: float, guard: str = "warn") -> SpinorField:
    stepper = DiracStepper(psi.grid, potential, dt, guard)
    return SpinorField(psi.grid, stepper.step(psi.values, psi.t), psi.t + dt)


@dataclass
class RunRecord:
    grid: Grid
    units: UnitsConfig
    potential: FourPotential
    config: EvolverConfig
    snapshots: list[SpinorField] = field(default_factory=list)
    observations: list[dict] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def snapshot_dt(self) -> float:
        return self.config.dt * self.config.stride

    def metadata(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "units": self.units.to_dict(),
            "potential": dict(self.potential.spec),
            "evolver": self.config.to_dict(),
            "times": self.times.tolist(),
        }


Observer = Callable[[SpinorField, FourPotential], dict]


def evolve(psi0: SpinorField, potential: FourPotential, config: EvolverConfig,
           observers: Sequence[Observer] = ()) -> RunRecord:
    """Snapshots are stored at step indices that are multiples of ``config.stride``."""
    stepper = DiracStepper(psi0.grid, potential, config.dt, config.guard)
    rec = RunRecord(psi0.grid, potential.units, potential, config)
    t0 = psi0.t
    psi = psi0.values.copy()

    def record(values, t):
        snap = SpinorField(psi0.grid, values.copy(), t)
        rec.snapshots.append(snap)
        rec.observations.append({name: val for obs in observers for name, val in obs(snap, potential).items()})

    record(psi, t0)
    for n in range(config.nsteps):
        psi = stepper.step(psi, t0 + n * config.dt)
        if (n + 1) % config.stride == 0:
            record(psi, t0 + (n + 1) * config.dt)
    return rec


def norm_observer(snap: SpinorField, potential: FourPotential) -> dict:
    return {"norm": snap.norm()}


# -- derivative jets ---------------------------------------------------------

@dataclass
class SpinorJet:
    """psi with its first and second space-time derivatives at one instant.

    ``psi_t``/``psi_tt`` are lab-time derivatives; ``grad[k]`` and
    ``grad_t[k]`` are d_k psi and d_k psi_t (zero along missing axes);
    ``hess[k, l]`` is d_k d_l psi.
    """

    grid: Grid
    units: UnitsConfig
    t: float
    psi: np.ndarray
    psi_t: np.ndarray
    psi_tt: np.ndarray
    grad: np.ndarray
    grad_t: np.ndarray
    hess: np.ndarray

    def d(self, mu: int) -> np.ndarray:
        """Covariant derivative d_mu psi with d_0 = (1/c) d_t."""
        if mu == 0:
            return self.psi_t / self.units.c
        return self.grad[mu - 1]

    def dd(self, mu: int, nu: int) -> np.ndarray:
        c = self.units.c
        if mu == 0 and nu == 0:
            return self.psi_tt / c**2
        if mu == 0:
            return self.grad_t[nu - 1] / c
        if nu == 0:
            return self.grad_t[mu - 1] / c
        return self.hess[mu - 1, nu - 1]

    def spinor(self) -> SpinorField:
        return SpinorField(self.grid, self.psi, self.t)


def _spatial_derivatives(psi: np.ndarray, grid: Grid):
    grad = np.zeros((3, *psi.shape), dtype=np.complex128)
    hess = np.zeros((3, 3, *psi.shape), dtype=np.complex128)
    for k in range(grid.dim):
        grad[k] = spectral_derivative(psi, grid, k)
    for k in range(grid.dim):
        for l in range(k, grid.dim):
            if k == l:
                hess[k, k] = spectral_derivative(psi, grid, k, order=2)
            else:
                hess[k, l] = hess[l, k] = spectral_derivative(grad[k], grid, l)
    return grad, hess


def jet_from_generator(psi: SpinorField, potential: FourPotential) -> SpinorJet:
    """Time derivatives from the Dirac generator: psi_t = -iH psi / hbar (exact in the model)."""
    grid, units = psi.grid, potential.units
    cache = {"H0E": free_hamiltonian_k(grid, units)}
    hb = units.hbar
    psi_t = -1j / hb * apply_hamiltonian(psi.values, grid, potential, psi.t, cache)
    psi_tt = -1j / hb * (apply_hamiltonian(psi_t, grid, potential, psi.t, cache)
                         + apply_hamiltonian_t(psi.values, potential, psi.t))
    grad, hess = _spatial_derivatives(psi.values, grid)
    grad_t = np.zeros_like(grad)
    for k in range(grid.dim):
        grad_t[k] = spectral_derivative(psi_t, grid, k)
    return SpinorJet(grid, units, psi.t, psi.values, psi_t, psi_tt, grad, grad_t, hess)


def jet_from_history(snapshots: Sequence[SpinorField], index: int, dt: float,
                     units: UnitsConfig) -> SpinorJet:
    """Fallback for saved runs: second-order finite differences of the snapshot series."""
    if len(snapshots) < 3:
        raise ValueError("history-based derivatives need at least 3 snapshots")
    arr = np.array([s.values for s in snapshots])
    n = len(arr)
    i = min(max(index, 1), n - 2)
    if i == index:
        psi_t = (arr[i + 1] - arr[i - 1]) / (2 * dt)
    else:
        psi_t = np.gradient(arr, dt, axis=0, edge_order=2)[index]
    psi_tt = (arr[i + 1] - 2 * arr[i] + arr[i - 1]) / dt**2
    snap = snapshots[index]
    grid = snap.grid
    grad, hess = _spatial_derivatives(snap.values, grid)
    grad_t = np.zeros_like(grad)
    for k in range(grid.dim):
        grad_t[k] = spectral_derivative(psi_t, grid, k)
    return SpinorJet(grid, units, snap.t, snap.values, psi_t, psi_tt, grad, grad_t, hess)
