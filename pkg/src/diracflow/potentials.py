"""External electromagnetic four-potentials sampled on a periodic grid.

A potential is a pair of callables ``V(t)`` (grid-shaped) and ``A(t)``
(``(3, *grid)``, always three Cartesian components so a 1D grid may carry a
transverse vector potential), with their time derivatives.  Uniform magnetic
fields cannot be represented by a periodic vector potential; they live in
``H_background`` and are only consumed by the Pauli solver and the field
strength diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import Grid, UnitsConfig, curl, divergence, gradient

FAMILIES = ("zero", "constant-E", "constant-B", "constant-V", "scalar-well", "plane-wave-field")


@dataclass
class FourPotential:
    grid: Grid
    units: UnitsConfig
    V_fn: Callable[[float], np.ndarray]
    A_fn: Callable[[float], np.ndarray]
    V_t_fn: Callable[[float], np.ndarray] | None = None
    A_t_fn: Callable[[float], np.ndarray] | None = None
    static: bool = False
    H_background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    spec: dict = field(default_factory=dict)

    def V(self, t: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.V_fn(t), dtype=float), self.grid.shape)

    def A(self, t: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.A_fn(t), dtype=float), (3, *self.grid.shape))

    def four_potential(self, t: float) -> np.ndarray:
        """Contravariant A^mu = (V, A_vec), shape (4, *grid)."""
        return np.concatenate([self.V(t)[None], self.A(t)])

    def V_t(self, t: float) -> np.ndarray:
        if self.static:
            return np.zeros(self.grid.shape)
        if self.V_t_fn is not None:
            return np.broadcast_to(np.asarray(self.V_t_fn(t), dtype=float), self.grid.shape)
        h = 1e-5
        return (self.V(t + h) - self.V(t - h)) / (2 * h)

    def A_t(self, t: float) -> np.ndarray:
        if self.static:
            return np.zeros((3, *self.grid.shape))
        if self.A_t_fn is not None:
            return np.broadcast_to(np.asarray(self.A_t_fn(t), dtype=float), (3, *self.grid.shape))
        h = 1e-5
        return (self.A(t + h) - self.A(t - h)) / (2 * h)

    @property
    def has_background_field(self) -> bool:
        return bool(np.any(self.H_background != 0))

    def is_zero(self) -> bool:
        return self.spec.get("family") == "zero"

    def field_strengths(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """E = -grad V - (1/c) dA/dt and H = curl A (+ uniform background)."""
        c = self.units.c
        E = -gradient(self.V(t), self.grid) - self.A_t(t) / c
        H = curl(np.asarray(self.A(t)), self.grid) + self.H_background.reshape(3, *([1] * self.grid.dim))
        return E, H

    def lorentz_residual(self, t: float) -> np.ndarray:
        """d^mu A_mu = (1/c) dV/dt + div A; reported, never enforced."""
        return self.V_t(t) / self.units.c + divergence(np.asarray(self.A(t)), self.grid)

    def max_abs_V(self) -> float:
        return float(np.max(np.abs(self.V(0.0))))


def _zeros3(grid):
    z = np.zeros((3, *grid.shape))
    return lambda t: z


def zero_potential(grid: Grid, units: UnitsConfig) -> FourPotential:
    z = np.zeros(grid.shape)
    return FourPotential(grid, units, lambda t: z, _zeros3(grid), static=True, spec={"family": "zero"})


def constant_V(grid: Grid, units: UnitsConfig, V0: float) -> FourPotential:
    v = np.full(grid.shape, float(V0))
    return FourPotential(grid, units, lambda t: v, _zeros3(grid), static=True,
                         spec={"family": "constant-V", "V0": float(V0)})


def constant_E(grid: Grid, units: UnitsConfig, E) -> FourPotential:
    """Uniform E in the temporal gauge: V = 0, A(t) = -c E t (periodic, Lorentz-compliant)."""
    E = np.asarray(E, dtype=float).reshape(3)
    c = units.c
    z = np.zeros(grid.shape)
    ones = np.ones(grid.shape)

    def A(t):
        return np.einsum("k,...->k...", -c * E * t, ones)

    def A_t(t):
        return np.einsum("k,...->k...", -c * E, ones)

    return FourPotential(grid, units, lambda t: z, A, V_t_fn=lambda t: z, A_t_fn=A_t,
                         static=False, spec={"family": "constant-E", "E": E.tolist()})


def constant_B(grid: Grid, units: UnitsConfig, H) -> FourPotential:
    H = np.asarray(H, dtype=float).reshape(3)
    z = np.zeros(grid.shape)
    return FourPotential(grid, units, lambda t: z, _zeros3(grid), static=True, H_background=H,
                         spec={"family": "constant-B", "H": H.tolist()})


def scalar_well(grid: Grid, units: UnitsConfig, depth: float, width: float, center=None) -> FourPotential:
    """Gaussian well V(x) = -depth * exp(-|x - center|^2 / (2 width^2))."""
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    r2 = sum((x - x0) ** 2 for x, x0 in zip(grid.coords, center))
    v = -float(depth) * np.exp(-r2 / (2 * width**2))
    return FourPotential(grid, units, lambda t: v, _zeros3(grid), static=True,
                         spec={"family": "scalar-well", "depth": float(depth), "width": float(width),
                               "center": center.tolist()})


def plane_wave_field(grid: Grid, units: UnitsConfig, amplitude: float, mode: int = 1,
                     polarization: int = 1) -> FourPotential:
    """Transverse wave A_pol = a cos(k x - c k t) travelling along axis 0 (Lorentz gauge)."""
    if polarization == 0:
        raise ValueError("polarization must be transverse to the propagation axis 0")
    k = 2 * np.pi * mode / grid.extents[0]
    w = units.c * k
    x = grid.coords[0]
    z = np.zeros(grid.shape)

    def A(t):
        out = np.zeros((3, *grid.shape))
        out[polarization] = amplitude * np.cos(k * x - w * t)
        return out

    def A_t(t):
        out = np.zeros((3, *grid.shape))
        out[polarization] = amplitude * w * np.sin(k * x - w * t)
        return out

    return FourPotential(grid, units, lambda t: z, A, V_t_fn=lambda t: z, A_t_fn=A_t, static=False,
                         spec={"family": "plane-wave-field", "amplitude": float(amplitude),
                               "mode": int(mode), "polarization": int(polarization)})


def build_potential(grid: Grid, units: UnitsConfig, spec: dict) -> FourPotential:
    spec = dict(spec)
    family = spec.pop("family", "zero")
    if family == "zero":
        return zero_potential(grid, units)
    if family == "constant-V":
        return constant_V(grid, units, spec["V0"])
    if family == "constant-E":
        return constant_E(grid, units, spec["E"])
    if family == "constant-B":
        return constant_B(grid, units, spec["H"])
    if family == "scalar-well":
        return scalar_well(grid, units, spec["depth"], spec["width"], spec.get("center"))
    if family == "plane-wave-field":
        return plane_wave_field(grid, units, spec["amplitude"], spec.get("mode", 1),
                                spec.get("polarization", 1))
    raise ValueError(f"unknown potential family {family!r}; known: {', '.join(FAMILIES)}")
