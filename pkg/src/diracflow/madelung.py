"""Per-component densities and phases of a bispinor.

Components 1, 2 are written ``sqrt(rho) exp(+iS/hbar)`` and components 3, 4
``sqrt(rho) exp(-iS/hbar)``.  Phase gradients come from ``Im(d psi / psi)``
so no unwrapping is ever needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dirac import SpinorJet
from .numerics import Grid, SpinorField

PHASE_SIGNS = np.array([1.0, 1.0, -1.0, -1.0])
DEFAULT_REL_FLOOR = 1e-12


@dataclass
class MadelungData:
    grid: Grid
    rho: np.ndarray
    S: np.ndarray
    t: float = 0.0
    hbar: float = 1.0
    signs: np.ndarray = PHASE_SIGNS

    def default_floor(self, rel: float = DEFAULT_REL_FLOOR) -> float:
        return default_floor(self.rho, rel)


@dataclass
class PhaseGradientField:
    """Covariant phase gradients ``d[i, mu] = d_mu S_i`` (``d_0 = (1/c) d_t``).

    ``mask[i]`` marks points with ``rho_i <= floor``; gradients are exactly
    zero there.
    """

    grid: Grid
    d: np.ndarray
    mask: np.ndarray
    floor: float
    t: float = 0.0

    def dt_S(self, c: float) -> np.ndarray:
        return self.d[:, 0] * c

    def grad_S(self) -> np.ndarray:
        return self.d[:, 1:]

    def raised(self) -> np.ndarray:
        """Contravariant d^mu S_i."""
        out = self.d.copy()
        out[:, 1:] *= -1
        return out


def default_floor(rho: np.ndarray, rel: float = DEFAULT_REL_FLOOR) -> float:
    peak = float(np.max(rho))
    return rel * peak if peak > 0 else rel


def decompose(psi: SpinorField, hbar: float = 1.0) -> MadelungData:
    vals = psi.values
    rho = np.abs(vals) ** 2
    S = PHASE_SIGNS.reshape(4, *([1] * psi.grid.dim)) * np.angle(vals)
    # np.angle is in (-pi, pi]; the sign flip for 3, 4 maps pi to -pi.
    S = np.where(S == -np.pi, np.pi, S) * hbar
    return MadelungData(psi.grid, rho, S, psi.t, hbar)


def reconstruct(m: MadelungData) -> SpinorField:
    if np.any(m.rho < 0):
        raise ValueError("densities must be nonnegative")
    signs = m.signs.reshape(4, *([1] * m.grid.dim))
    vals = np.sqrt(m.rho) * np.exp(1j * signs * m.S / m.hbar)
    return SpinorField(m.grid, vals, m.t)


def phase_gradient(jet: SpinorJet, floor: float | None = None) -> PhaseGradientField:
    """d_mu S_i = +-hbar Im(d_mu psi_i / psi_i), masked where rho_i <= floor."""
    rho = np.abs(jet.psi) ** 2
    if floor is None:
        floor = default_floor(rho)
    if not floor > 0:
        raise ValueError("the density floor must be positive (nodes make phase gradients singular)")
    mask = rho <= floor
    safe = np.where(mask, 1.0, jet.psi)
    signs = PHASE_SIGNS.reshape(4, *([1] * jet.grid.dim)) * jet.units.hbar
    d = np.empty((4, 4, *jet.grid.shape))
    for mu in range(4):
        d[:, mu] = np.where(mask, 0.0, signs * np.imag(jet.d(mu) / safe))
    return PhaseGradientField(jet.grid, d, mask, float(floor), jet.t)
