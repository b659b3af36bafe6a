"""Classical charged-particle ensembles: Lorentz flow, flow maps and the
Hamilton-Jacobi and vorticity residuals they must satisfy.

Conventions: x^0 = c t, v^mu = dx^mu / d tau (so v^0 = gamma c), metric
(+,-,-,-).  In components the law of motion m dv_mu/d tau = (q/c) F_mu,nu v^nu
reads

    m dv^0/d tau = (q/c) E . v,     m dv/d tau = (q/c) (E v^0 + v x H).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import UnitsConfig

FieldFn = Callable[[float, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class ClassicalState:
    """Lab time ``t``, position (3,), contravariant four-velocity (4,), proper time."""

    t: float
    x: np.ndarray
    v: np.ndarray
    tau: float = 0.0

    @classmethod
    def from_velocity(cls, x, u, units: UnitsConfig, t: float = 0.0) -> "ClassicalState":
        """State with ordinary velocity ``u`` (|u| < c)."""
        u = np.asarray(u, dtype=float).reshape(3)
        speed2 = float(u @ u)
        if speed2 >= units.c**2:
            raise ValueError("speed must be below c")
        g = 1.0 / np.sqrt(1 - speed2 / units.c**2)
        return cls(t, np.asarray(x, float).reshape(3).copy(), np.concatenate([[g * units.c], g * u]))

    def velocity(self, c: float) -> np.ndarray:
        return c * self.v[1:] / self.v[0]

    def shell_residual(self, c: float) -> float:
        return float((self.v[0] ** 2 - self.v[1:] @ self.v[1:]) / c**2 - 1.0)


def uniform_field(E=(0, 0, 0), H=(0, 0, 0)) -> FieldFn:
    E = np.asarray(E, dtype=float)
    H = np.asarray(H, dtype=float)
    return lambda t, x: (E, H)


def quadrupole_field(kappa: float) -> FieldFn:
    """Electric field of V = kappa (x^2 - y^2) / 2 (harmonic in the plane)."""
    def f(t, x):
        return np.array([-kappa * x[0], kappa * x[1], 0.0]), np.zeros(3)
    return f


def field_from_potential(potential) -> FieldFn:
    """Field of a grid potential, uniform families analytic, others multilinear."""
    fam = potential.spec.get("family", "")
    if fam == "zero":
        return uniform_field()
    if fam == "constant-E":
        return uniform_field(E=potential.spec["E"])
    if fam == "constant-B":
        return uniform_field(H=potential.spec["H"])
    if fam == "constant-V":
        return uniform_field()
    from .trajectories import _multilinear

    grid = potential.grid

    def f(t, x):
        E, H = potential.field_strengths(t)
        pt = np.asarray(x[: grid.dim], dtype=float)[None]
        e, _ = _multilinear(E, grid, pt, None)
        h, _ = _multilinear(H, grid, pt, None)
        return e[:, 0], h[:, 0]
    return f


def _rhs(y: np.ndarray, fields: FieldFn, units: UnitsConfig) -> np.ndarray:
    """d/d tau of (c t, x, v) for one particle."""
    c, q, m = units.c, units.q, units.m
    v = y[4:]
    E, H = fields(y[0] / c, y[1:4])
    dv0 = q / (m * c) * (E @ v[1:])
    dv = q / (m * c) * (E * v[0] + np.cross(v[1:], H))
    return np.concatenate([v, [dv0], dv])


def _project(v: np.ndarray, c: float) -> np.ndarray:
    out = v.copy()
    out[0] = np.sqrt(c**2 + v[1:] @ v[1:])
    return out


def lorentz_push(state: ClassicalState, fields: FieldFn, dtau: float, units: UnitsConfig) -> ClassicalState:
    """One RK4 proper-time step, then v^0 re-projected onto v.v = c^2."""
    c = units.c
    y = np.concatenate([[state.t * c], state.x, state.v])
    k1 = _rhs(y, fields, units)
    k2 = _rhs(y + dtau / 2 * k1, fields, units)
    k3 = _rhs(y + dtau / 2 * k2, fields, units)
    k4 = _rhs(y + dtau * k3, fields, units)
    y = y + dtau / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return ClassicalState(y[0] / c, y[1:4], _project(y[4:], c), state.tau + dtau)


@dataclass
class Worldline:
    tau: np.ndarray
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    dt_dtau: np.ndarray
    dx_dtau: np.ndarray
    dv_dtau: np.ndarray


def integrate_worldline(state: ClassicalState, fields: FieldFn, units: UnitsConfig, dtau: float,
                        nsteps: int) -> Worldline:
    c = units.c
    taus, ts, xs, vs, ders = [], [], [], [], []
    s = state
    for k in range(nsteps + 1):
        taus.append(s.tau)
        ts.append(s.t)
        xs.append(s.x.copy())
        vs.append(s.v.copy())
        ders.append(_rhs(np.concatenate([[s.t * c], s.x, s.v]), fields, units))
        if k < nsteps:
            s = lorentz_push(s, fields, dtau, units)
    ders = np.array(ders)
    return Worldline(np.array(taus), np.array(ts), np.array(xs), np.array(vs),
                     ders[:, 0] / c, ders[:, 1:4], ders[:, 4:])


def _hermite(t_knots, y, dy, t_query):
    """Cubic Hermite interpolation of y(t) (rows = knots) at ``t_query``."""
    idx = np.clip(np.searchsorted(t_knots, t_query, side="right") - 1, 0, len(t_knots) - 2)
    t0, t1 = t_knots[idx], t_knots[idx + 1]
    h = t1 - t0
    s = ((t_query - t0) / h)[:, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    hh = h[:, None]
    return h00 * y[idx] + h10 * hh * dy[idx] + h01 * y[idx + 1] + h11 * hh * dy[idx + 1]


def resample_lab(w: Worldline, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions and four-velocities at lab ``times`` (derivatives in t via the chain rule)."""
    if times[0] < w.t[0] - 1e-12 or times[-1] > w.t[-1] + 1e-12:
        raise ValueError("lab times outside the integrated worldline")
    dxdt = w.dx_dtau / w.dt_dtau[:, None]
    dvdt = w.dv_dtau / w.dt_dtau[:, None]
    return _hermite(w.t, w.x, dxdt, times), _hermite(w.t, w.v, dvdt, times)


@dataclass
class ClassicalFlow:
    seeds: np.ndarray
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    spacing: float
    min_separation: float
    units: UnitsConfig


def flow_map(seeds, velocities, fields: FieldFn, units: UnitsConfig, tmax: float, dtau: float,
             times: np.ndarray | None = None, spacing: float | None = None) -> ClassicalFlow:
    """Integrate every seed and resample all worldlines to common lab times.

    ``velocities`` is ``(n, 3)`` ordinary velocities or a callable of the
    seed position.  Proper time runs until every worldline passes ``tmax``.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    n, dim = seeds.shape
    if len({tuple(s) for s in seeds}) != n:
        raise ValueError("seeds must be distinct")
    if callable(velocities):
        velocities = np.array([velocities(s) for s in seeds])
    velocities = np.asarray(velocities, dtype=float).reshape(n, 3)
    if times is None:
        times = np.linspace(0.0, tmax, 101)
    xs, vs = [], []
    for s, u in zip(seeds, velocities):
        x3 = np.zeros(3)
        x3[:dim] = s
        st = ClassicalState.from_velocity(x3, u, units)
        # dt/dtau >= 1, so tmax / dtau steps always reach t = tmax
        nsteps = int(np.ceil(tmax / dtau)) + 2
        w = integrate_worldline(st, fields, units, dtau, nsteps)
        if w.t[-1] < tmax:
            raise RuntimeError("worldline did not reach tmax")
        x, v = resample_lab(w, times)
        xs.append(x)
        vs.append(v)
    xs = np.array(xs).transpose(1, 0, 2)
    vs = np.array(vs).transpose(1, 0, 2)
    if spacing is None:
        d0 = np.sqrt(np.sum((seeds[:, None] - seeds[None]) ** 2, axis=-1))
        np.fill_diagonal(d0, np.inf)
        spacing = float(np.min(d0))
    diff = xs[:, :, None, :dim] - xs[:, None, :, :dim]
    sep = np.sqrt(np.sum(diff**2, axis=-1))
    sep[:, np.arange(n), np.arange(n)] = np.inf
    return ClassicalFlow(seeds, np.asarray(times), xs, vs, spacing, float(np.min(sep)), units)


def lattice(dim: int, n: int, h: float, center=None) -> np.ndarray:
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    ax = (np.arange(n) - (n - 1) / 2) * h
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1) + center


def _quadratic_basis(d: np.ndarray) -> np.ndarray:
    cols = [np.ones(d.shape[0])]
    dim = d.shape[1]
    cols += [d[:, a] for a in range(dim)]
    cols += [d[:, a] * d[:, b] for a in range(dim) for b in range(a, dim)]
    return np.stack(cols, axis=1)


def _spatial_gradient(points: np.ndarray, values: np.ndarray, at: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares quadratic fit; returns (value, gradient (dim, k)) at ``at``."""
    d = (points - at) / h
    B = _quadratic_basis(d)
    if np.linalg.matrix_rank(B) < B.shape[1]:
        raise ValueError("stencil under-resolved: neighbour positions are degenerate")
    coef, *_ = np.linalg.lstsq(B, values, rcond=None)
    dim = points.shape[1]
    return coef[0], coef[1 : 1 + dim] / h


def fundamental_residual(flow: ClassicalFlow, fields: FieldFn, index: int | None = None,
                         stencil: int = 2) -> dict:
    """Max of (d_mu p_nu - d_nu p_mu) v^nu over interior seeds at one lab time.

    v_nu(x, t) is rebuilt from neighbouring worldlines: quadratic least squares
    in space at t (seed-lattice neighbours within ``stencil`` spacings), and
    d_t v = Dv/Dt - (u . grad) v with the material derivative centred along
    each worldline.  The residual is normalised by max(m |dv| |v|, (|q|/c) |F v|).
    """
    units = flow.units
    c, m, q = units.c, units.m, units.q
    n_t, n, _ = flow.x.shape
    dim = flow.seeds.shape[1]
    if index is None:
        index = n_t // 2
    if not 1 <= index <= n_t - 2:
        raise ValueError("index needs neighbouring lab times")
    dt = flow.times[index + 1] - flow.times[index - 1]
    h = flow.spacing
    lo, hi = flow.seeds.min(axis=0), flow.seeds.max(axis=0)
    interior = np.all((flow.seeds >= lo + stencil * h - 1e-9) & (flow.seeds <= hi - stencil * h + 1e-9), axis=1)
    metric = np.array([1.0, -1.0, -1.0, -1.0])
    worst, g_kin, g_field = 0.0, 0.0, 0.0
    for p in np.flatnonzero(interior):
        near = np.flatnonzero(np.max(np.abs(flow.seeds - flow.seeds[p]), axis=1) <= stencil * h + 1e-9)
        pts = flow.x[index, near, :dim]
        vcov = flow.v[index, near] * metric
        _, grad = _spatial_gradient(pts, vcov, flow.x[index, p, :dim], h)
        v = flow.v[index, p]
        u = c * v[1:] / v[0]
        Dv = (flow.v[index + 1, p] - flow.v[index - 1, p]) * metric / dt
        dv_dt = Dv - u[:dim] @ grad
        dmu_v = np.zeros((4, 4))
        dmu_v[0] = dv_dt / c
        dmu_v[1 : 1 + dim] = grad
        E, H = fields(flow.times[index], flow.x[index, p])
        F = np.zeros((4, 4))
        F[0, 1:] = E
        F[1:, 0] = -E
        F[1, 2], F[2, 1] = -H[2], H[2]
        F[2, 3], F[3, 2] = -H[0], H[0]
        F[3, 1], F[1, 3] = -H[1], H[1]
        kin = m * ((dmu_v - dmu_v.T) @ v)
        force = q / c * (F @ v)
        # d_mu p_nu = m d_mu v_nu + (q/c) d_mu A_nu, antisymmetrised into F
        worst = max(worst, float(np.max(np.abs(kin + force))))
        g_kin = max(g_kin, m * float(np.max(np.abs(dmu_v))) * float(np.max(np.abs(v))))
        g_field = max(g_field, float(np.max(np.abs(force))))
    scale = max(g_kin, g_field)
    if scale == 0:
        return {"max": worst, "scale": 0.0, "relative": worst}
    return {"max": worst, "scale": scale, "relative": worst / scale}


def hj_residual(phi: np.ndarray, times: np.ndarray, axes: list[np.ndarray], units: UnitsConfig,
                V=None, A=None, mode: str = "relativistic") -> np.ndarray:
    """Hamilton-Jacobi residual of phi sampled on ``(len(times), *grid)``.

    Derivatives are second-order finite differences (one-sided at the
    borders), so phi need not be periodic and linear phi is exact.  ``V`` and
    ``A`` are arrays broadcastable to phi and ``(3, *phi.shape)``.
    """
    c, m, q = units.c, units.m, units.q
    phi = np.asarray(phi, dtype=float)
    dim = len(axes)
    V = np.zeros_like(phi) if V is None else np.broadcast_to(V, phi.shape)
    A = np.zeros((3, *phi.shape)) if A is None else np.broadcast_to(A, (3, *phi.shape))
    phi_t = np.gradient(phi, times, axis=0, edge_order=2)
    grad = np.zeros((3, *phi.shape))
    for a in range(dim):
        grad[a] = np.gradient(phi, axes[a], axis=a + 1, edge_order=2)
    if mode == "relativistic":
        k0 = phi_t / c + q / c * V
        kv = -grad + q / c * A
        return k0**2 - np.sum(kv**2, axis=0) - (m * c) ** 2
    if mode == "nonrelativistic":
        return phi_t + np.sum((grad - q / c * A) ** 2, axis=0) / (2 * m) + q * V + m * c**2
    raise ValueError(f"unknown mode {mode!r}")


# -- benchmarks --------------------------------------------------------------

def hyperbolic_benchmark(units: UnitsConfig, E: float = 0.5, reach: float = 2.0, dtau: float = 1e-3) -> dict:
    """Start at rest in uniform E along x; compare x(t) with the closed form up to |qE|t/mc = reach."""
    c, m, q = units.c, units.m, units.q
    a = q * E / (m * c)
    tmax = reach / abs(a)
    fields = uniform_field(E=(E, 0, 0))
    st = ClassicalState(0.0, np.zeros(3), np.array([c, 0.0, 0.0, 0.0]))
    w = integrate_worldline(st, fields, units, dtau, int(np.ceil(tmax / dtau)) + 1)
    times = np.linspace(0, tmax, 201)
    x, v = resample_lab(w, times)
    exact = m * c**2 / (q * E) * (np.sqrt(1 + (a * times) ** 2) - 1)
    scale = float(np.max(np.abs(exact)))
    return {"relative_error": float(np.max(np.abs(x[:, 0] - exact))) / scale,
            "shell": float(np.max(np.abs((v[:, 0] ** 2 - np.sum(v[:, 1:] ** 2, axis=1)) / c**2 - 1))), "tmax": tmax}


def gyro_benchmark(units: UnitsConfig, H: float = 1.0, speed: float = 0.5, periods: int = 5,
                   steps_per_period: int = 2000) -> dict:
    """Circular motion in uniform H along z; measured angular frequency vs qH/(gamma m c)."""
    c, m, q = units.c, units.m, units.q
    gamma = 1 / np.sqrt(1 - (speed / c) ** 2)
    omega = q * H / (gamma * m * c)
    T = 2 * np.pi / abs(omega)
    dtau = T / gamma / steps_per_period
    st = ClassicalState.from_velocity((0, 0, 0), (speed, 0, 0), units)
    w = integrate_worldline(st, uniform_field(H=(0, 0, H)), units, dtau, periods * steps_per_period)
    u = c * w.v[:, 1:3] / w.v[:, [0]]
    angle = np.unwrap(np.arctan2(u[:, 1], u[:, 0]))
    measured = (angle[-1] - angle[0]) / (w.t[-1] - w.t[0])
    # the velocity direction rotates at -omega in this sign convention for dv/dt = (q/mc) v x H
    return {"omega_expected": float(-omega), "omega_measured": float(measured),
            "relative_error": float(abs(measured + omega) / abs(omega))}


# lab-frame test flows for the fundamental-equation convergence study;
# initial velocity fields are smooth so the seed lattice stays resolvable
FUNDAMENTAL_CASES = {
    "free": (uniform_field(), lambda s: np.array([0.3 * np.tanh(s[0]), 0.2 * np.sin(s[1]) if len(s) > 1 else 0.0, 0.0])),
    "E": (uniform_field(E=(0.3, 0.1, 0)), lambda s: np.array([0.3 * np.tanh(s[0]), 0.0, 0.0])),
    "quadrupole": (quadrupole_field(0.2), lambda s: np.zeros(3)),
    "gyroE": (uniform_field(E=(0.1, 0, 0), H=(0, 0, 0.5)),
              lambda s: np.array([0.2 * np.sin(s[0]), 0.1 * s[1] if len(s) > 1 else 0.0, 0.0])),
}


def convergence_study(case: str, units: UnitsConfig, dim: int = 2, spacings=(0.2, 0.1, 0.05),
                      n: int = 9, t_mid: float = 0.5) -> dict:
    """Fundamental residual at t_mid for a sequence of seed spacings h, and the observed orders."""
    fields, vel = FUNDAMENTAL_CASES[case]
    res = []
    for h in spacings:
        seeds = lattice(dim, n, h, center=np.full(dim, 0.3))
        fl = flow_map(seeds, vel, fields, units, tmax=t_mid + h, dtau=h / 20,
                      times=np.array([t_mid - h / 2, t_mid, t_mid + h / 2]))
        res.append(fundamental_residual(fl, fields, 1)["relative"])
    ratios = [np.log(res[k] / res[k + 1]) / np.log(spacings[k] / spacings[k + 1]) for k in range(len(res) - 1)]
    return {"spacings": list(spacings), "residuals": res, "orders": [float(r) for r in ratios]}


def hj_benchmark(units: UnitsConfig, p: float = 0.3) -> dict:
    """Both Hamilton-Jacobi residuals on their plane-wave solutions p x - E t."""
    c, m = units.c, units.m
    x = np.linspace(-1, 1, 21)
    t = np.linspace(0, 1, 11)
    T, X = np.meshgrid(t, x, indexing="ij")
    e_rel = np.sqrt(m**2 * c**4 + p**2 * c**2)
    e_nr = m * c**2 + p**2 / (2 * m)
    rel = hj_residual(p * X - e_rel * T, t, [x], units)
    nr = hj_residual(p * X - e_nr * T, t, [x], units, mode="nonrelativistic")
    return {"relativistic": float(np.max(np.abs(rel))) / (m * c) ** 2,
            "nonrelativistic": float(np.max(np.abs(nr))) / (m * c**2)}
