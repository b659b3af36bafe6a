"""Particle paths along a component's four-velocity field.

The spatial part of v_i is interpolated (multilinear or spectral) and the
three-velocity is rebuilt as ``c v / sqrt(c^2 + |v|^2)``, which is the
on-shell ``c v / v^0`` and stays below ``c`` whatever the interpolant does.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hidden_phase import HiddenPhaseSet, extend_over_mask
from .numerics import FourVectorField, Grid


@dataclass
class VelocitySample:
    u: np.ndarray
    fallback: np.ndarray


def _wrap(x: np.ndarray, grid: Grid) -> np.ndarray:
    L = np.asarray(grid.extents[: grid.dim], dtype=float)
    return (x + L / 2) % L - L / 2


def _multilinear(field_: np.ndarray, grid: Grid, x: np.ndarray, mask: np.ndarray | None):
    """Periodic multilinear interpolation of ``field_`` (``(k, *grid)``) at points ``x`` (``(n, dim)``)."""
    n = x.shape[0]
    dx = np.asarray(grid.spacing)
    s = (x + np.asarray(grid.extents[: grid.dim]) / 2) / dx
    base = np.floor(s).astype(int)
    frac = s - base
    out = np.zeros((field_.shape[0], n))
    bad = np.zeros(n, dtype=bool)
    for corner in range(2 ** grid.dim):
        offs = np.array([(corner >> a) & 1 for a in range(grid.dim)])
        idx = tuple((base[:, a] + offs[a]) % grid.points[a] for a in range(grid.dim))
        w = np.prod(np.where(offs == 1, frac, 1 - frac), axis=1)
        out += w * field_[(slice(None), *idx)]
        if mask is not None:
            bad |= mask[idx] & (w > 0)
    return out, bad


def _spectral(field_: np.ndarray, grid: Grid, x: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant through the grid values (Nyquist split symmetrically)."""
    coef = np.fft.fftn(field_, axes=tuple(range(1, grid.dim + 1)))
    out = np.zeros((field_.shape[0], x.shape[0]))
    for p in range(x.shape[0]):
        c = coef
        for a in range(grid.dim):
            N = grid.points[a]
            k = grid.wavenumbers_1d[a]
            phase = np.exp(1j * k * (x[p, a] - grid.axes[a][0])) / N
            # the Nyquist mode contributes cos(k_N x), not exp(i k_N x)
            phase[N // 2] = np.cos(k[N // 2] * (x[p, a] - grid.axes[a][0])) / N
            c = np.tensordot(c, phase, axes=([1], [0]))
        out[:, p] = np.real(c)
    return out


def _nearest_unmasked(grid: Grid, mask: np.ndarray, x: np.ndarray) -> tuple:
    pts = np.argwhere(~mask)
    if pts.size == 0:
        raise ValueError("every grid point is masked for this component")
    coords = np.stack([grid.axes[a][pts[:, a]] for a in range(grid.dim)], axis=1)
    L = np.asarray(grid.extents[: grid.dim])
    d = (coords - x + L / 2) % L - L / 2
    j = int(np.argmin(np.sum(d**2, axis=1)))
    return tuple(pts[j])


def sample_velocity(hps: HiddenPhaseSet, i: int, x, units, order: str = "linear") -> VelocitySample:
    """Three-velocity c v_i^k / v_i^0 of component ``i`` at points ``x``.

    ``order`` is ``"linear"`` (multilinear, default) or ``"spectral"``.  A
    query touching a masked node takes the value at the nearest unmasked node
    and is flagged.
    """
    grid = hps.v[i].grid
    c = units.c
    x = _wrap(np.atleast_2d(np.asarray(x, dtype=float)), grid)
    vec = hps.v[i].values[1:]
    mask = hps.mask[i]
    if order == "linear":
        v, bad = _multilinear(vec, grid, x, mask)
    elif order == "spectral":
        # masked nodes hold no velocity; a jump to zero there would ring
        # through the whole trigonometric interpolant
        filled = np.stack([extend_over_mask(vec[k], mask) for k in range(vec.shape[0])])
        v = _spectral(filled, grid, x)
        _, bad = _multilinear(vec[:1], grid, x, mask)
    else:
        raise ValueError(f"unknown interpolation order {order!r}")
    for p in np.flatnonzero(bad):
        v[:, p] = vec[(slice(None), *_nearest_unmasked(grid, mask, x[p]))]
    u = c * v / np.sqrt(c**2 + np.sum(v**2, axis=0))
    return VelocitySample(u.T, bad)


@dataclass
class TrajectoryEnsemble:
    component: int
    seeds: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    unwrapped: np.ndarray
    velocities: np.ndarray
    frozen: np.ndarray
    frozen_at: np.ndarray
    interpolation: str
    crossings: list[tuple[float, int, int]] = field(default_factory=list)

    def max_speed(self) -> float:
        return float(np.max(np.linalg.norm(self.velocities, axis=-1)))


class _TimeInterpolated:
    """Spatial v_i linearly interpolated in time between snapshots."""

    def __init__(self, series: list[HiddenPhaseSet], i: int):
        self.series = series
        self.t = np.array([s.t for s in series])
        self.i = i

    def at(self, t: float) -> HiddenPhaseSet:
        k = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2))
        t0, t1 = self.t[k], self.t[k + 1]
        w = (t - t0) / (t1 - t0)
        a, b = self.series[k], self.series[k + 1]
        if w <= 0:
            return a
        if w >= 1:
            return b
        vi = a.v[self.i].values * (1 - w) + b.v[self.i].values * w
        mask = a.mask | b.mask
        v = list(a.v)
        v[self.i] = FourVectorField(a.v[self.i].grid, vi, t)
        return HiddenPhaseSet(t, a.phi, a.phi_t, v, a.rho, mask, max(a.residual, b.residual))


def integrate_ensemble(series: list[HiddenPhaseSet], i: int, seeds, dt: float, units,
                       order: str = "linear", t_end: float | None = None,
                       check_crossings: bool = True) -> TrajectoryEnsemble:
    """RK4 paths of component ``i`` started at ``seeds`` (``(n, dim)``) at the first snapshot time."""
    times_s = np.array([s.t for s in series])
    if len(series) < 2:
        raise ValueError("need at least two snapshots")
    spacing = float(np.min(np.diff(times_s)))
    if dt > spacing * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the snapshot spacing {spacing}")
    grid = series[0].v[i].grid
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[1] != grid.dim:
        raise ValueError(f"seeds must have {grid.dim} coordinates")
    start = sample_velocity(series[0], i, seeds, units, order)
    if np.any(start.fallback):
        bad = np.flatnonzero(start.fallback).tolist()
        raise ValueError(f"seeds {bad} start in a masked region of component {i + 1}")
    t_end = times_s[-1] if t_end is None else t_end
    nsteps = int(round((t_end - times_s[0]) / dt))
    field_t = _TimeInterpolated(series, i)
    n = seeds.shape[0]
    x = seeds.copy()
    frozen = np.zeros(n, dtype=bool)
    frozen_at = np.full(n, np.nan)
    times = [times_s[0]]
    pos, unw, vel = [_wrap(x, grid)], [x.copy()], [start.u]
    crossings = []

    def u_at(t, pts):
        s = sample_velocity(field_t.at(t), i, pts, units, order)
        return s.u, s.fallback

    t = times_s[0]
    for step in range(nsteps):
        k1, f1 = u_at(t, x)
        k2, f2 = u_at(t + dt / 2, x + dt / 2 * k1[:, : grid.dim])
        k3, f3 = u_at(t + dt / 2, x + dt / 2 * k2[:, : grid.dim])
        k4, f4 = u_at(t + dt, x + dt * k3[:, : grid.dim])
        incr = dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)[:, : grid.dim]
        hit = (f1 | f2 | f3 | f4) & ~frozen
        frozen_at[hit] = t
        frozen |= hit
        x_new = np.where(frozen[:, None], x, x + incr)
        t = times_s[0] + (step + 1) * dt
        if check_crossings:
            crossings += [(t, a, b) for a, b in _crossed(unw[-1], x_new, seeds)]
        x = x_new
        u, _ = u_at(t, x)
        times.append(t)
        pos.append(_wrap(x, grid))
        unw.append(x.copy())
        vel.append(np.where(frozen[:, None], 0.0, u))
    return TrajectoryEnsemble(i, seeds, np.array(times), np.array(pos), np.array(unw), np.array(vel),
                              frozen, frozen_at, order, crossings)


def _crossed(before: np.ndarray, after: np.ndarray, seeds: np.ndarray) -> list[tuple[int, int]]:
    """Neighbouring seed pairs whose separation reversed direction during a step."""
    n = seeds.shape[0]
    if n < 2:
        return []
    d0 = np.sum((seeds[:, None] - seeds[None]) ** 2, axis=-1)
    np.fill_diagonal(d0, np.inf)
    nearest = np.argmin(d0, axis=1)
    out = []
    for a in range(n):
        b = int(nearest[a])
        if a < b or nearest[b] != a:
            if np.dot(before[a] - before[b], after[a] - after[b]) < 0:
                out.append((a, b))
    return out


def write_csv(ensembles: list[TrajectoryEnsemble], path: Path | str, dim: int) -> Path:
    """Rows ``t,component,particle_id,x[,y,z],vx[,vy,vz]``; components are 1-based."""
    axes = "xyz"[:dim]
    header = ["t", "component", "particle_id", *axes, *[f"v{a}" for a in axes]]
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for ens in ensembles:
            for k, t in enumerate(ens.times):
                for p in range(ens.positions.shape[1]):
                    w.writerow([repr(float(t)), ens.component + 1, p,
                                *[repr(float(v)) for v in ens.positions[k, p]],
                                *[repr(float(v)) for v in ens.velocities[k, p, :dim]]])
    return path
