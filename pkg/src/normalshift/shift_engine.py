"""Simulation of the normal shift of a hypersurface along trajectories.

A hypersurface S moves along the trajectory family started g-orthogonally
from each of its points with initial speed nu(u), where nu solves the
implicit equation W(x(u), nu) = W(p0, nu0).  For force fields of the
generating family the shifted surfaces S_t stay orthogonal to every
trajectory; the deviation functions phi_k = g(tau_k, v) measure how well
that holds and vanish identically on exact normal shifts.

The trajectory family is integrated with a fixed-step classical
Runge-Kutta scheme so all family members share time grids exactly, which
lets tau_k = dx/du^k come from fourth-order central differences across
the u-grid.  Grid boundary points lack the stencil width and carry NaN
deviations; consumers aggregate with NaN-aware reductions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateTangents,
    GridTooCoarse,
    NonFinite,
    RootNotBracketed,
    TrajectoryEscaped,
    ZeroVelocity,
)
from .extended_fields import isotropic_speed_derivative
from .force_builder import ForceField, GeneratingScalar, as_force_field
from .tensor_core import (
    SPEED_FLOOR,
    MetricField,
    christoffel_at,
    inverse_metric_at,
    metric_at,
    speed_at,
    unit_direction,
)

Array = np.ndarray


@dataclass(frozen=True)
class Hypersurface:
    """Parametrized hypersurface with a marked point and normalization.

    ``chart_map`` sends an (n-1)-dimensional parameter u to coordinates;
    ``du``, when given, returns the matrix du(u)[i, k] = dx^i/du^k whose
    columns are the tangents tau_k.  ``nu0`` is the initial speed at the
    marked parameter ``base_u`` and ``orientation`` selects the side of
    the surface the unit normal points to.
    """

    dim_u: int
    chart_map: Callable[[Array], Array]
    du: Optional[Callable[[Array], Array]] = None
    base_u: Tuple[float, ...] = ()
    nu0: float = 1.0
    orientation: float = 1.0
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.dim_u < 1:
            raise ValueError("dim_u must be at least 1")
        if self.nu0 == 0.0:
            raise ValueError("nu0 must be nonzero")
        if self.orientation not in (1.0, -1.0, 1, -1):
            raise ValueError("orientation must be +1 or -1")
        if len(self.base_u) != self.dim_u:
            raise ValueError("base_u must have dim_u components")


@dataclass(frozen=True)
class PhaseState:
    """Point of the trajectory flow: position, velocity, time."""

    x: Array
    v: Array
    t: float


@dataclass(frozen=True)
class GridSpec:
    """Uniform parameter grid, one (start, stop, count) range per direction."""

    ranges: Tuple[Tuple[float, float, int], ...]

    def axes(self) -> Tuple[Array, ...]:
        return tuple(np.linspace(a, b, int(c)) for a, b, c in self.ranges)


@dataclass(frozen=True)
class ShiftRecord:
    """Recorded trajectory family of one shift run.

    ``u_grid`` flattens the parameter grid in row-major order matching
    ``grid_shape``; per-trajectory arrays are indexed [grid point, time].
    Deviations ``phi`` and the difference tangents ``tau`` are NaN at grid
    points within two cells of the boundary, where the interior stencil
    does not fit.
    """

    u_grid: Array
    grid_shape: Tuple[int, ...]
    u_axes: Tuple[Array, ...]
    times: Array
    x: Array
    v: Array
    phi: Array
    tau: Array
    W_vals: Array
    speed_vals: Array
    nu_vals: Array
    dt: float
    sample_stride: int

    def __post_init__(self):
        n_u, dim_u = self.u_grid.shape
        n_t = self.times.shape[0]
        dim = self.x.shape[-1]
        expected = {
            "x": (n_u, n_t, dim),
            "v": (n_u, n_t, dim),
            "phi": (n_u, n_t, dim_u),
            "tau": (n_u, n_t, dim_u, dim),
            "W_vals": (n_u, n_t),
            "speed_vals": (n_u, n_t),
            "nu_vals": (n_u,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, want {shape}")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must increase strictly from 0")
        if int(np.prod(self.grid_shape)) != n_u:
            raise ValueError("grid_shape inconsistent with u_grid")

    def state_at(self, point: int, time_index: int) -> PhaseState:
        return PhaseState(
            x=self.x[point, time_index].copy(),
            v=self.v[point, time_index].copy(),
            t=float(self.times[time_index]),
        )


def surface_tangents(s: Hypersurface, u: Array) -> Array:
    """Tangent matrix T[k, i] = dx^i/du^k, differenced when du is absent."""
    u = np.asarray(u, dtype=float)
    if s.du is not None:
        return np.asarray(s.du(u), dtype=float).T
    h = s.fd_step * max(1.0, float(np.max(np.abs(u))) if u.size else 1.0)
    dim = np.asarray(s.chart_map(u), dtype=float).shape[0]
    out = np.empty((s.dim_u, dim))
    for k in range(s.dim_u):
        e = np.zeros(s.dim_u)
        e[k] = h
        coarse = (
            np.asarray(s.chart_map(u + e), dtype=float)
            - np.asarray(s.chart_map(u - e), dtype=float)
        ) / (2.0 * h)
        e[k] = 0.5 * h
        fine = (
            np.asarray(s.chart_map(u + e), dtype=float)
            - np.asarray(s.chart_map(u - e), dtype=float)
        ) / h
        out[k] = (4.0 * fine - coarse) / 3.0
    return out


def surface_normal(m: MetricField, s: Hypersurface, u: Array) -> Array:
    """The g-unit normal at chart point u, oriented by the surface.

    The base sign is fixed deterministically by requiring positive
    determinant of the frame (tau_1, ..., tau_{n-1}, n), then flipped by
    ``orientation``; over a connected patch this yields a smooth field.
    """
    u = np.asarray(u, dtype=float)
    x = np.asarray(s.chart_map(u), dtype=float)
    T = surface_tangents(s, u)
    g = metric_at(m, x)
    gram = T @ g @ T.T
    eigvals = np.linalg.eigvalsh(gram)
    if eigvals[0] < 1e-12 * max(1.0, eigvals[-1]):
        raise DegenerateTangents(f"tangent vectors nearly dependent at u = {u.tolist()}")
    # the normal spans the nullspace of the (n-1) x n system (T g) n = 0
    _, _, vt = np.linalg.svd(T @ g)
    n_vec = vt[-1]
    n_vec = n_vec / math.sqrt(float(n_vec @ g @ n_vec))
    frame = np.vstack([T, n_vec])
    if np.linalg.det(frame) < 0.0:
        n_vec = -n_vec
    return float(s.orientation) * n_vec


def solve_nu(
    gs: GeneratingScalar,
    m: MetricField,
    s: Hypersurface,
    u: Array,
    max_iter: int = 100,
) -> float:
    """Initial speed at u making W match its value at the marked point.

    Newton iteration with the analytic speed derivative of W, safeguarded
    by bisection inside a geometrically grown bracket around |nu0|; the
    sign of nu0 is preserved.
    """
    u = np.asarray(u, dtype=float)
    x_base = np.asarray(s.chart_map(np.asarray(s.base_u, dtype=float)), dtype=float)
    x = np.asarray(s.chart_map(u), dtype=float)
    sigma0 = abs(float(s.nu0))
    w0 = float(gs.W.eval(x_base, sigma0))
    tol = 1e-12 * (1.0 + abs(w0))

    def gap(sigma: float) -> float:
        return float(gs.W.eval(x, sigma)) - w0

    scan = sigma0 * np.power(8.0, np.linspace(-1.0, 1.0, 25))
    values = np.array([gap(sig) for sig in scan])
    lo = hi = None
    best = np.inf
    for j in range(len(scan) - 1):
        if values[j] == 0.0:
            return math.copysign(float(scan[j]), s.nu0)
        if values[j] * values[j + 1] <= 0.0:
            distance = abs(math.log(scan[j] / sigma0))
            if distance < best:
                best = distance
                lo, hi = float(scan[j]), float(scan[j + 1])
    if lo is None:
        raise RootNotBracketed(
            f"no speed in [{scan[0]:.4g}, {scan[-1]:.4g}] matches the surface value of W"
        )
    g_lo = gap(lo)
    sigma = min(max(sigma0, lo), hi)
    for _ in range(max_iter):
        g_sig = gap(sigma)
        if abs(g_sig) < tol:
            return math.copysign(sigma, s.nu0)
        if g_lo * g_sig <= 0.0:
            hi = sigma
        else:
            lo, g_lo = sigma, g_sig
        wv = isotropic_speed_derivative(gs.W, x, sigma)
        step = g_sig / wv if abs(wv) >= gs.wv_floor else None
        candidate = sigma - step if step is not None else None
        if candidate is not None and lo < candidate < hi:
            sigma = candidate
        else:
            sigma = 0.5 * (lo + hi)
    raise RootNotBracketed("speed iteration failed to converge")


def _flow_rhs(F: ForceField, m: MetricField, x: Array, v: Array) -> Tuple[Array, Array]:
    gamma = christoffel_at(m, x).gamma
    f_up = inverse_metric_at(m, x) @ np.asarray(F.eval(m, x, v), dtype=float)
    return v, f_up - (gamma @ v) @ v


def step_trajectory(F: ForceField, m: MetricField, st: PhaseState, dt: float) -> PhaseState:
    """One classical Runge-Kutta step of the second-order flow."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x, v = np.asarray(st.x, dtype=float), np.asarray(st.v, dtype=float)
    # overflow is diagnosed below rather than warned about element-wise
    with np.errstate(over="ignore", invalid="ignore"):
        k1x, k1v = _flow_rhs(F, m, x, v)
        k2x, k2v = _flow_rhs(F, m, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = _flow_rhs(F, m, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = _flow_rhs(F, m, x + dt * k3x, v + dt * k3v)
        x_new = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v_new = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
        raise NonFinite(f"integration overflowed near t = {st.t:.6g}")
    if speed_at(m, x_new, v_new) <= SPEED_FLOOR:
        raise ZeroVelocity(f"speed collapsed below floor near t = {st.t:.6g}")
    return PhaseState(x=x_new, v=v_new, t=st.t + dt)


def _stencil_tangent(xs: Array, flat: int, stride: int, h: float) -> Array:
    return (
        -xs[flat + 2 * stride]
        + 8.0 * xs[flat + stride]
        - 8.0 * xs[flat - stride]
        + xs[flat - 2 * stride]
    ) / (12.0 * h)


def run_shift(
    gs: GeneratingScalar,
    m: MetricField,
    s: Hypersurface,
    grid: GridSpec,
    t_end: float,
    dt: float,
    *,
    sample_stride: int = 10,
    force_constant_nu: bool = False,
    chart_box: Optional[Sequence[Sequence[float]]] = None,
) -> ShiftRecord:
    """Integrate the trajectory family of a shift and assemble deviations.

    Initial conditions follow the orthogonal-start rule x = chart(u),
    v = nu(u) n(u), with nu from ``solve_nu`` unless ``force_constant_nu``
    pins nu = nu0 everywhere (the negative control).  States are recorded
    every ``sample_stride`` steps; ``chart_box``, when given, bounds the
    coordinates and integration aborts once a trajectory leaves it.
    """
    if len(grid.ranges) != s.dim_u:
        raise ValueError("grid dimensionality does not match the surface")
    for a, b, c in grid.ranges:
        if int(c) < 5:
            raise GridTooCoarse(
                f"{int(c)} points on [{a}, {b}]: the interior stencil needs at least 5"
            )
    axes = grid.axes()
    shape = tuple(len(ax) for ax in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    u_grid = np.stack([part.ravel() for part in mesh], axis=1)
    n_u = u_grid.shape[0]
    dim = m.dim

    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end)) or n_steps < 1:
        raise ValueError("t_end must be a positive multiple of dt")
    if n_steps % sample_stride != 0:
        raise ValueError("sample_stride must divide the step count")
    record_steps = np.arange(0, n_steps + 1, sample_stride)
    times = record_steps * dt
    n_t = len(times)

    box = None if chart_box is None else np.asarray(chart_box, dtype=float)

    ff = as_force_field(gs)
    xs = np.empty((n_u, n_t, dim))
    vs = np.empty((n_u, n_t, dim))
    nu_vals = np.empty(n_u)

    for i, u in enumerate(u_grid):
        nu = float(s.nu0) if force_constant_nu else solve_nu(gs, m, s, u)
        nu_vals[i] = nu
        state = PhaseState(
            x=np.asarray(s.chart_map(u), dtype=float),
            v=nu * surface_normal(m, s, u),
            t=0.0,
        )
        xs[i, 0], vs[i, 0] = state.x, state.v
        slot = 1
        for step in range(1, n_steps + 1):
            state = step_trajectory(ff, m, state, dt)
            if box is not None and (
                np.any(state.x < box[:, 0]) or np.any(state.x > box[:, 1])
            ):
                raise TrajectoryEscaped(
                    f"trajectory from u = {u.tolist()} left the chart box at t = {state.t:.6g}"
                )
            if step == record_steps[slot]:
                xs[i, slot], vs[i, slot] = state.x, state.v
                slot += 1

    speed_vals = np.empty((n_u, n_t))
    W_vals = np.empty((n_u, n_t))
    for i in range(n_u):
        for j in range(n_t):
            speed_vals[i, j] = speed_at(m, xs[i, j], vs[i, j])
            W_vals[i, j] = float(gs.W.eval(xs[i, j], speed_vals[i, j]))

    strides = [int(np.prod(shape[k + 1 :], dtype=int)) for k in range(s.dim_u)]
    spacings = [float(ax[1] - ax[0]) for ax in axes]
    phi = np.full((n_u, n_t, s.dim_u), np.nan)
    tau = np.full((n_u, n_t, s.dim_u, dim), np.nan)
    for i in range(n_u):
        idx = np.unravel_index(i, shape)
        for j in range(n_t):
            v_cov = metric_at(m, xs[i, j]) @ vs[i, j]
            for k in range(s.dim_u):
                if not (2 <= idx[k] <= shape[k] - 3):
                    continue
                t_vec = _stencil_tangent(xs[:, j], i, strides[k], spacings[k])
                tau[i, j, k] = t_vec
                phi[i, j, k] = float(t_vec @ v_cov)

    return ShiftRecord(
        u_grid=u_grid,
        grid_shape=shape,
        u_axes=axes,
        times=times,
        x=xs,
        v=vs,
        phi=phi,
        tau=tau,
        W_vals=W_vals,
        speed_vals=speed_vals,
        nu_vals=nu_vals,
        dt=dt,
        sample_stride=sample_stride,
    )


def w_dynamics_residual(rec: ShiftRecord, gs: GeneratingScalar) -> float:
    """Sup-norm gap between recorded W and the integrated law dW/dt = h(W)."""
    worst = 0.0
    for i in range(rec.W_vals.shape[0]):
        w = float(rec.W_vals[i, 0])
        for j in range(1, rec.times.shape[0]):
            step = float(rec.times[j] - rec.times[j - 1])
            k1 = float(gs.h(w))
            k2 = float(gs.h(w + 0.5 * step * k1))
            k3 = float(gs.h(w + 0.5 * step * k2))
            k4 = float(gs.h(w + step * k3))
            w = w + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            worst = max(worst, abs(float(rec.W_vals[i, j]) - w))
    return worst


def surface_constancy_residual(rec: ShiftRecord) -> Array:
    """Per-time spread (max - min over the family) of the recorded W."""
    return np.max(rec.W_vals, axis=0) - np.min(rec.W_vals, axis=0)


def speed_law_residual(rec: ShiftRecord, F: ForceField, m: MetricField) -> float:
    """Sup-norm gap between differenced d|v|/dt and sum_i N_i F^i.

    Uses the interior fourth-order stencil on the recorded time grid, so
    the record must span at least five sample times.
    """
    n_t = rec.times.shape[0]
    if n_t < 5:
        raise ValueError("record too short for the interior stencil")
    step = float(rec.times[1] - rec.times[0])
    worst = 0.0
    for i in range(rec.speed_vals.shape[0]):
        s_row = rec.speed_vals[i]
        for j in range(2, n_t - 2):
            ds_dt = (
                -s_row[j + 2] + 8.0 * s_row[j + 1] - 8.0 * s_row[j - 1] + s_row[j - 2]
            ) / (12.0 * step)
            x, v = rec.x[i, j], rec.v[i, j]
            pr = unit_direction(m, x, v)
            f_up = inverse_metric_at(m, x) @ np.asarray(F.eval(m, x, v), dtype=float)
            worst = max(worst, abs(ds_dt - float(pr.N_down @ f_up)))
    return worst


def max_normalized_deviation(rec: ShiftRecord, m: MetricField) -> float:
    """Largest |phi_k| / (|v| * g-norm of tau_k) over the interior record."""
    worst = 0.0
    n_u, n_t, dim_u = rec.phi.shape
    for i in range(n_u):
        for j in range(n_t):
            if not np.isfinite(rec.phi[i, j, 0]):
                continue
            g = metric_at(m, rec.x[i, j])
            for k in range(dim_u):
                t_vec = rec.tau[i, j, k]
                norm = math.sqrt(float(t_vec @ g @ t_vec))
                worst = max(
                    worst, abs(float(rec.phi[i, j, k])) / (rec.speed_vals[i, j] * norm)
                )
    return worst


def plane_surface(
    axis: int = 2,
    offset: float = 0.0,
    base_u: Tuple[float, float] = (0.0, 0.0),
    nu0: float = 1.0,
    orientation: float = 1.0,
) -> Hypersurface:
    """Coordinate plane x^axis = offset in three dimensions."""
    others = [k for k in range(3) if k != axis]

    def chart(u):
        x = np.empty(3)
        x[axis] = offset
        x[others[0]] = u[0]
        x[others[1]] = u[1]
        return x

    def du(u):
        out = np.zeros((3, 2))
        out[others[0], 0] = 1.0
        out[others[1], 1] = 1.0
        return out

    return Hypersurface(
        dim_u=2, chart_map=chart, du=du, base_u=base_u, nu0=nu0, orientation=orientation
    )


def sphere_surface(
    radius: float = 1.0,
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0),
    base_u: Tuple[float, float] = (0.5 * math.pi, 0.0),
    nu0: float = 1.0,
    orientation: float = 1.0,
) -> Hypersurface:
    """Sphere patch in angles u = (polar, azimuth), polar away from 0, pi."""
    c = np.asarray(center, dtype=float)

    def chart(u):
        th, ph = float(u[0]), float(u[1])
        return c + radius * np.array(
            [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
        )

    def du(u):
        th, ph = float(u[0]), float(u[1])
        out = np.empty((3, 2))
        out[:, 0] = radius * np.array(
            [math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), -math.sin(th)]
        )
        out[:, 1] = radius * np.array(
            [-math.sin(th) * math.sin(ph), math.sin(th) * math.cos(ph), 0.0]
        )
        return out

    return Hypersurface(
        dim_u=2, chart_map=chart, du=du, base_u=base_u, nu0=nu0, orientation=orientation
    )


def graph_surface(
    height: Callable[[Array], float],
    base_u: Tuple[float, float] = (0.0, 0.0),
    nu0: float = 1.0,
    orientation: float = 1.0,
) -> Hypersurface:
    """Graph x^3 = height(u^1, u^2); tangents come from differencing."""

    def chart(u):
        return np.array([u[0], u[1], float(height(u))])

    return Hypersurface(
        dim_u=2, chart_map=chart, base_u=base_u, nu0=nu0, orientation=orientation
    )
