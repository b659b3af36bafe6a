"""Grids, spectral derivatives, field containers and the gamma-matrix algebra.

Conventions used across the package:

* metric signature (+, -, -, -), four-vectors stored contravariant,
  ``x^0 = c t`` so that ``d_0 = (1/c) d/dt``;
* natural units with ``hbar = 1``; ``c``, ``m`` and ``q`` are free;
* all grids are periodic and uniform, coordinates run over ``[-L/2, L/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

METRIC = np.diag([1.0, -1.0, -1.0, -1.0])
MIN_POINTS = 8


class GridError(ValueError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid in 1 to 3 spatial dimensions."""

    dim: int
    extents: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"dim must be 1, 2 or 3, got {self.dim}")
        if len(self.extents) != self.dim or len(self.points) != self.dim:
            raise GridError("extents and points need one entry per axis")
        for ax, (ext, n) in enumerate(zip(self.extents, self.points)):
            if not ext > 0:
                raise GridError(f"extent on axis {ax} must be positive, got {ext}")
            if not _is_power_of_two(int(n)):
                raise GridError(
                    f"points on axis {ax} must be a power of two (spectral kernels), got {n}"
                )
            if n < MIN_POINTS:
                raise GridError(f"points on axis {ax} must be >= {MIN_POINTS}, got {n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(ext / n for ext, n in zip(self.extents, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            -0.5 * ext + dx * np.arange(n)
            for ext, dx, n in zip(self.extents, self.spacing, self.shape)
        )

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def wavenumbers_1d(self) -> tuple[np.ndarray, ...]:
        return tuple(
            2.0 * np.pi * np.fft.fftfreq(n, d=dx) for n, dx in zip(self.shape, self.spacing)
        )

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcast wavenumber arrays, one per axis, each of full grid shape."""
        return tuple(np.meshgrid(*self.wavenumbers_1d, indexing="ij"))

    @cached_property
    def _derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode zeroed for odd derivatives so real fields stay real.
        out = []
        for k in self.wavenumbers_1d:
            k = k.copy()
            k[len(k) // 2] = 0.0
            out.append(k)
        return tuple(np.meshgrid(*out, indexing="ij"))

    @property
    def k_max(self) -> float:
        return float(np.sqrt(sum(np.max(np.abs(k)) ** 2 for k in self.wavenumbers_1d)))

    def integrate(self, values: np.ndarray) -> float:
        """Rectangle-rule integral over the periodic cell (pairwise summation)."""
        return float(np.sum(values) * self.cell_volume)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "extents": list(self.extents), "points": list(self.points)}


def make_grid(dim: int, extents, points) -> Grid:
    extents = tuple(float(e) for e in np.atleast_1d(extents))
    points = tuple(int(p) for p in np.atleast_1d(points))
    return Grid(dim=int(dim), extents=extents, points=points)


@dataclass(frozen=True)
class UnitsConfig:
    c: float = 1.0
    m: float = 1.0
    q: float = -1.0
    hbar: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")

    @property
    def rest_energy(self) -> float:
        return self.m * self.c**2

    def energy(self, p) -> np.ndarray:
        """Free-particle energy E(p) = sqrt(m^2 c^4 + p^2 c^2)."""
        p2 = np.sum(np.square(np.atleast_1d(p)), axis=0)
        return np.sqrt(self.m**2 * self.c**4 + p2 * self.c**2)

    def to_dict(self) -> dict:
        return {"c": self.c, "m": self.m, "q": self.q, "hbar": self.hbar}


@dataclass
class SpinorField:
    """Bispinor psi = (phi, chi); ``values`` has shape ``(4, *grid.shape)``."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != (4, *self.grid.shape):
            raise ValueError(
                f"spinor must have shape {(4, *self.grid.shape)}, got {self.values.shape}"
            )

    @property
    def upper(self) -> np.ndarray:
        return self.values[:2]

    @property
    def lower(self) -> np.ndarray:
        return self.values[2:]

    def density(self) -> np.ndarray:
        return np.sum(np.abs(self.values) ** 2, axis=0)

    def norm(self) -> float:
        return self.grid.integrate(self.density())

    def copy(self) -> "SpinorField":
        return SpinorField(self.grid, self.values.copy(), self.t)


@dataclass
class FourVectorField:
    """Contravariant four-vector field; ``values`` has shape ``(4, *grid.shape)``."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (4, *self.grid.shape):
            raise ValueError(
                f"four-vector field must have shape {(4, *self.grid.shape)}, got {self.values.shape}"
            )

    def lowered(self) -> np.ndarray:
        return np.einsum("mn,n...->m...", METRIC, self.values)

    def square(self) -> np.ndarray:
        """Minkowski square v^mu v_mu."""
        v = self.values
        return v[0] ** 2 - v[1] ** 2 - v[2] ** 2 - v[3] ** 2


def assert_finite(values: np.ndarray, what: str = "field") -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"{what} contains non-finite entries")
    return values


def spectral_derivative(f: np.ndarray, grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    """Spectral derivative of ``f`` (grid-shaped, trailing axes) along ``axis``.

    Leading axes of ``f`` beyond the grid shape are treated as a batch.
    """
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} out of range for a {grid.dim}D grid")
    f = np.asarray(f)
    nlead = f.ndim - grid.dim
    if nlead < 0 or f.shape[nlead:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    if order % 2:
        k = grid._derivative_wavenumbers[axis]
    else:
        k = grid.wavenumbers[axis]
    axes = tuple(range(nlead, f.ndim))
    out = np.fft.ifftn((1j * k) ** order * np.fft.fftn(f, axes=axes), axes=axes)
    if np.isrealobj(f):
        return out.real
    return out


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spatial gradient padded to three components (missing axes give zero)."""
    f = np.asarray(f)
    out = np.zeros((3, *f.shape), dtype=np.result_type(f.dtype, np.float64))
    for ax in range(grid.dim):
        out[ax] = spectral_derivative(f, grid, ax)
    return out


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    return sum(spectral_derivative(f, grid, ax, order=2) for ax in range(grid.dim))


def divergence(vec: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence of a 3-component spatial vector field."""
    return sum(spectral_derivative(vec[ax], grid, ax) for ax in range(grid.dim))


def curl(vec: np.ndarray, grid: Grid) -> np.ndarray:
    g = [[spectral_derivative(vec[j], grid, i) if i < grid.dim else np.zeros(grid.shape)
          for j in range(3)] for i in range(3)]
    # g[i][j] = d_i vec_j
    return np.array([g[1][2] - g[2][1], g[2][0] - g[0][2], g[0][1] - g[1][0]])


# -- gamma algebra -----------------------------------------------------------

PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)


@dataclass(frozen=True)
class GammaSet:
    """Dirac-representation gamma matrices with derived alpha, beta, Sigma."""

    gammas: np.ndarray
    metric: np.ndarray = field(default_factory=lambda: METRIC.copy())
    signature: tuple[int, int, int, int] = (1, -1, -1, -1)

    @property
    def beta(self) -> np.ndarray:
        return self.gammas[0]

    @cached_property
    def alpha(self) -> np.ndarray:
        return np.array([self.gammas[0] @ self.gammas[k] for k in (1, 2, 3)])

    @cached_property
    def sigma(self) -> np.ndarray:
        """Block-diagonal spin matrices Sigma^k = diag(sigma_k, sigma_k)."""
        z = np.zeros((2, 2), dtype=np.complex128)
        return np.array([np.block([[PAULI[k], z], [z, PAULI[k]]]) for k in (1, 2, 3)])

    def commutator(self, mu: int, nu: int) -> np.ndarray:
        g = self.gammas
        return g[mu] @ g[nu] - g[nu] @ g[mu]

    def anticommutator(self, mu: int, nu: int) -> np.ndarray:
        g = self.gammas
        return g[mu] @ g[nu] + g[nu] @ g[mu]


def gamma_set() -> GammaSet:
    i2 = np.eye(2, dtype=np.complex128)
    z = np.zeros((2, 2), dtype=np.complex128)
    g0 = np.block([[i2, z], [z, -i2]])
    gk = [np.block([[z, PAULI[k]], [-PAULI[k], z]]) for k in (1, 2, 3)]
    return GammaSet(np.array([g0, *gk]))


GAMMA = gamma_set()


def apply_matrix(mat: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Apply a constant or pointwise ``(n, n[, *grid])`` matrix to ``(n, *grid)``."""
    if mat.ndim == 2:
        return np.tensordot(mat, psi, axes=(1, 0))
    return np.einsum("ij...,j...->i...", mat, psi)


def bilinear(a: np.ndarray, mat: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise a^dagger M b for spinor-valued arrays."""
    return np.sum(np.conj(a) * apply_matrix(mat, b), axis=0)


# -- time derivatives of histories -------------------------------------------

def time_derivative(series: np.ndarray, dt: float) -> np.ndarray:
    """Second-order time derivative along axis 0: centered inside, one-sided at ends."""
    series = np.asarray(series)
    if series.shape[0] < 3:
        raise ValueError("need at least 3 snapshots for a second-order time derivative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.gradient(series, dt, axis=0, edge_order=2)


def four_divergence(history, dt: float, c: float = 1.0, index: int | None = None) -> np.ndarray:
    """(1/c) d_t F^0 + d_k F^k at one snapshot of a uniform history.

    ``history`` is a sequence of FourVectorField or ``(4, *grid)`` arrays; the
    default snapshot is the middle one.  Spatial part spectral, time part
    centered second order (one-sided second order at the ends).
    """
    return four_divergence_series(history, dt, c=c, indices=[index])[0]


def four_divergence_series(history, dt: float, c: float = 1.0, indices=None, grid: Grid | None = None):
    snaps = list(history)
    if len(snaps) < 3:
        raise ValueError("four_divergence needs at least 3 consecutive snapshots")
    if grid is None:
        grid = snaps[0].grid
    arr = np.array([getattr(s, "values", s) for s in snaps])
    if indices is None:
        indices = range(len(snaps))
    indices = [len(snaps) // 2 if i is None else i for i in indices]
    dF0 = time_derivative(arr[:, 0], dt)
    return [dF0[i] / c + divergence(arr[i, 1:], grid) for i in indices]


def dominant_frequency(series, dt: float, pad: int = 8) -> float:
    """Angular frequency of the strongest spectral peak of a real time series.

    Mean removed, Hann window, ``pad``-fold zero padding, then a parabola
    through the log-magnitudes of the peak bin and its neighbours.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 8:
        raise ValueError("need at least 8 samples")
    x = (x - x.mean()) * np.hanning(x.size)
    n = pad * x.size
    mag = np.abs(np.fft.rfft(x, n))
    k = int(np.argmax(mag[1:])) + 1
    if 1 <= k < mag.size - 1:
        a, b, c = np.log(mag[k - 1 : k + 2] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    return float(2 * np.pi * (k + shift) / (n * dt))
