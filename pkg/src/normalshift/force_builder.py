"""Constructors for force fields of systems admitting the normal shift.

The whole family is parametrized by a generating pair (W, h): an isotropic
scalar W(x, |v|) whose speed derivative W_v never vanishes, plus a free
one-variable function h.  Writing N for the unit velocity direction and P
for the projector orthogonal to it, the force covector is

    F_k = h(W) N_k / W_v - |v| sum_i (dW/dx^i / W_v) (2 N^i N_k - delta^i_k).

The same field factors through the scalar ansatz

    F_k = A N_k - |v| sum_i (dA/dv^i) P^i_k,
    A   = a + sum_i b_i v^i,   a = h(W)/W_v,   b_k = -(dW/dx^k)/W_v,

and the pair of routes is kept deliberately independent so tests can play
them against each other.  A reparametrization W -> rho(W) with strictly
monotone rho, compensated in h, leaves the force unchanged; that gauge
freedom is exposed for the same reason.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import DegenerateWv, NonMonotoneGauge, QuadratureFailure
from .extended_fields import (
    ExtendedScalar,
    IsotropicScalar,
    isotropic_second_speed_derivative,
    isotropic_speed_derivative,
    spatial_gradient_isotropic,
    velocity_gradient,
)
from .tensor_core import MetricField, christoffel_at, metric_at, unit_direction

Array = np.ndarray


@dataclass(frozen=True)
class GeneratingScalar:
    """The pair (W, h) generating a force field.

    ``wv_floor`` operationalizes the hypothesis W_v != 0: any evaluation
    where |dW/dspeed| falls below it raises :class:`DegenerateWv`.
    """

    W: IsotropicScalar
    h: Callable[[float], float]
    wv_floor: float = 1e-8


@dataclass(frozen=True)
class AnsatzField:
    """Isotropic coefficient fields (a, b_1 .. b_n) of the scalar ansatz."""

    a: IsotropicScalar
    b: Tuple[IsotropicScalar, ...]


@dataclass(frozen=True)
class ForceField:
    """Evaluatable force covector F_k(x, v).

    ``label`` records how the field was built: "generated-from-W" and
    "ansatz" fields are theorem-certified by construction, "user" fields
    are arbitrary (negative controls live there).  ``dv`` and ``nabla``
    optionally supply analytic derivative matrices

        dv(m, x, v)[r, k]    = d F_k / d v^r
        nabla(m, x, v)[r, k] = covariant spatial derivative of F_k along x^r

    which the residual evaluator uses instead of finite differences when
    present.
    """

    eval: Callable[[MetricField, Array, Array], Array]
    label: str
    dv: Optional[Callable[[MetricField, Array, Array], Array]] = None
    nabla: Optional[Callable[[MetricField, Array, Array], Array]] = None


@dataclass(frozen=True)
class GaugeMap:
    """Strictly monotone reparametrization rho with inverse and derivative."""

    fn: Callable[[float], float]
    inverse: Callable[[float], float]
    derivative: Callable[[float], float]


def _wv_checked(gs: GeneratingScalar, x: Array, speed: float) -> float:
    wv = isotropic_speed_derivative(gs.W, x, speed)
    if abs(wv) < gs.wv_floor:
        raise DegenerateWv(
            f"dW/dspeed = {wv:.3e} below floor {gs.wv_floor:.1e} at speed {speed:.4g}"
        )
    return wv


def compute_b(gs: GeneratingScalar, m: MetricField, x: Array, v_speed: float) -> Array:
    """Covector b_k = -(dW/dx^k) / (dW/dspeed) at fixed speed."""
    wv = _wv_checked(gs, x, v_speed)
    return -spatial_gradient_isotropic(gs.W, m, x, v_speed) / wv


def compute_a(gs: GeneratingScalar, m: MetricField, x: Array, v_speed: float) -> float:
    """Scalar a = h(W) / (dW/dspeed)."""
    wv = _wv_checked(gs, x, v_speed)
    return float(gs.h(gs.W.eval(np.asarray(x, dtype=float), v_speed))) / wv


def ansatz_A(af: AnsatzField, m: MetricField, x: Array, v: Array) -> float:
    """A = a(x, |v|) + sum_i b_i(x, |v|) v^i."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    speed = unit_direction(m, x, v).speed
    total = float(af.a.eval(x, speed))
    for b_i, v_i in zip(af.b, v):
        total += float(b_i.eval(x, speed)) * float(v_i)
    return total


def force_from_A(A: ExtendedScalar, m: MetricField, x: Array, v: Array) -> Array:
    """Scalar-ansatz force: F_k = A N_k - |v| sum_i (dA/dv^i) P^i_k."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    pr = unit_direction(m, x, v)
    grad = velocity_gradient(A, m, x, v)
    return float(A.eval(x, v)) * pr.N_down - pr.speed * (grad @ pr.P)


def force_from_W(gs: GeneratingScalar, m: MetricField, x: Array, v: Array) -> Array:
    """Force covector built directly from the generating pair."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    pr = unit_direction(m, x, v)
    wv = _wv_checked(gs, x, pr.speed)
    wval = gs.W.eval(x, pr.speed)
    grad = spatial_gradient_isotropic(gs.W, m, x, pr.speed)
    reflect = 2.0 * np.outer(pr.N_up, pr.N_down) - np.eye(m.dim)
    return float(gs.h(wval)) / wv * pr.N_down - pr.speed * (grad / wv) @ reflect


def ansatz_from_generator(gs: GeneratingScalar, m: MetricField) -> AnsatzField:
    """Wrap a = h(W)/W_v and b_k = -W_k/W_v as isotropic field descriptors."""

    a = IsotropicScalar(
        eval=lambda x, s: compute_a(gs, m, x, s), fd_step=gs.W.fd_step
    )
    b = tuple(
        IsotropicScalar(
            eval=(lambda k: lambda x, s: float(compute_b(gs, m, x, s)[k]))(i),
            fd_step=gs.W.fd_step,
        )
        for i in range(m.dim)
    )
    return AnsatzField(a=a, b=b)


def ansatz_scalar(af: AnsatzField, m: MetricField) -> ExtendedScalar:
    """Package A = a + sum b_i v^i as an extended scalar.

    Fiber derivatives come from the isotropic structure instead of raw
    differencing: with a' = da/dspeed etc. and the covariant projector
    P_rs = g_rs - N_r N_s,

        dA/dv^s       = (a' + sum b'_i v^i) N_s + b_s
        d2A/dv^r dv^s = (a'' + sum b''_i v^i) N_r N_s + b'_s N_r + b'_r N_s
                        + (a'/|v| + sum b'_i N^i) P_rs.
    """

    def eval_(x, v):
        return ansatz_A(af, m, x, v)

    def dv(x, v):
        pr = unit_direction(m, x, v)
        s = pr.speed
        a_p = isotropic_speed_derivative(af.a, x, s)
        b = np.array([c.eval(x, s) for c in af.b])
        b_p = np.array([isotropic_speed_derivative(c, x, s) for c in af.b])
        return (a_p + b_p @ v) * pr.N_down + b

    def dv2(x, v):
        pr = unit_direction(m, x, v)
        s = pr.speed
        a_p = isotropic_speed_derivative(af.a, x, s)
        a_pp = isotropic_second_speed_derivative(af.a, x, s)
        b_p = np.array([isotropic_speed_derivative(c, x, s) for c in af.b])
        b_pp = np.array([isotropic_second_speed_derivative(c, x, s) for c in af.b])
        nn = np.outer(pr.N_down, pr.N_down)
        p_down = metric_at(m, x) - nn
        return (
            (a_pp + b_pp @ v) * nn
            + np.outer(pr.N_down, b_p)
            + np.outer(b_p, pr.N_down)
            + (a_p / s + b_p @ pr.N_up) * p_down
        )

    return ExtendedScalar(eval=eval_, dv=dv, dv2=dv2, fd_step=af.a.fd_step)


def _ansatz_force_pieces(af: AnsatzField, m: MetricField, x: Array, v: Array):
    pr = unit_direction(m, x, v)
    s = pr.speed
    a = float(af.a.eval(x, s))
    b = np.array([c.eval(x, s) for c in af.b])
    return pr, s, a, b


def ansatz_force_field(af: AnsatzField, label: str = "ansatz") -> ForceField:
    """Force field F_k = a N_k + |v| sum_i b_i (2 N^i N_k - delta^i_k).

    Carries analytic derivative closures assembled from the isotropic
    calculus: the fiber derivative of the unit direction is P/|v|, the
    spatial covariant derivatives of N and |v| vanish, and the isotropic
    coefficients differentiate through their (x, speed) arguments alone.
    """

    def eval_(m, x, v):
        pr, s, a, b = _ansatz_force_pieces(af, m, x, v)
        reflect = 2.0 * np.outer(pr.N_up, pr.N_down) - np.eye(m.dim)
        return a * pr.N_down + s * b @ reflect

    def dv(m, x, v):
        pr, s, a, b = _ansatz_force_pieces(af, m, x, v)
        a_p = isotropic_speed_derivative(af.a, x, s)
        b_p = np.array([isotropic_speed_derivative(c, x, s) for c in af.b])
        big_b = float(b @ v)
        big_b_p = float(b_p @ v)
        p_down = metric_at(m, x) - np.outer(pr.N_down, pr.N_down)
        out = np.empty((m.dim, m.dim))
        for r in range(m.dim):
            out[r] = (
                (a_p + 2.0 * big_b_p) * pr.N_down[r] * pr.N_down
                + 2.0 * b[r] * pr.N_down
                + (a + 2.0 * big_b) * p_down[:, r] / s
                - pr.N_down[r] * b
                - s * b_p * pr.N_down[r]
            )
        return out

    def nabla(m, x, v):
        pr, s, a, b = _ansatz_force_pieces(af, m, x, v)
        gamma = christoffel_at(m, x).gamma
        da = spatial_gradient_isotropic(af.a, m, x, s)
        db_raw = np.stack(
            [spatial_gradient_isotropic(c, m, x, s) for c in af.b], axis=1
        )  # db_raw[r, k] = d b_k / d x^r at fixed speed
        db = db_raw - np.einsum("crk,c->rk", gamma, b)
        out = np.empty((m.dim, m.dim))
        for r in range(m.dim):
            out[r] = (
                da[r] * pr.N_down
                + 2.0 * float(db[r] @ v) * pr.N_down
                - s * db[r]
            )
        return out

    return ForceField(eval=eval_, label=label, dv=dv, nabla=nabla)


def as_force_field(gs: GeneratingScalar) -> ForceField:
    """Evaluatable force field for a generating pair, with derivatives."""

    def eval_(m, x, v):
        return force_from_W(gs, m, x, v)

    def dv(m, x, v):
        return ansatz_force_field(ansatz_from_generator(gs, m)).dv(m, x, v)

    def nabla(m, x, v):
        return ansatz_force_field(ansatz_from_generator(gs, m)).nabla(m, x, v)

    return ForceField(eval=eval_, label="generated-from-W", dv=dv, nabla=nabla)


def gauge_transform(
    gs: GeneratingScalar,
    rho: GaugeMap,
    w_range: Tuple[float, float] = (0.25, 4.0),
    probe_count: int = 13,
) -> GeneratingScalar:
    """Reparametrize (W, h) by a strictly monotone rho, preserving the force.

    The new pair is W~ = rho(W) and h~(w) = h(rho^-1(w)) rho'(rho^-1(w)).
    Monotonicity and invertibility of rho are probed on ``w_range``, which
    should cover the values W takes in the intended working region.
    """
    lo, hi = w_range
    probes = np.linspace(lo, hi, probe_count)
    try:
        derivs = np.array([float(rho.derivative(t)) for t in probes])
        round_trip = np.array([float(rho.inverse(rho.fn(t))) for t in probes])
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise NonMonotoneGauge(f"gauge map failed to evaluate on {w_range}") from exc
    if not np.all(np.isfinite(derivs)) or np.min(np.abs(derivs)) < 1e-12:
        raise NonMonotoneGauge("gauge derivative vanishes on the probed range")
    if np.max(derivs) * np.min(derivs) < 0.0:
        raise NonMonotoneGauge("gauge derivative changes sign on the probed range")
    if np.max(np.abs(round_trip - probes)) > 1e-8 * (1.0 + np.max(np.abs(probes))):
        raise NonMonotoneGauge("gauge inverse does not invert fn on the probed range")

    w_old = gs.W

    def eval_(x, s):
        return float(rho.fn(w_old.eval(x, s)))

    dx = None
    dspeed = None
    if w_old.dx is not None:

        def dx(x, s):
            return float(rho.derivative(w_old.eval(x, s))) * np.asarray(
                w_old.dx(x, s), dtype=float
            )

    if w_old.dspeed is not None:

        def dspeed(x, s):
            return float(rho.derivative(w_old.eval(x, s))) * float(w_old.dspeed(x, s))

    def h_new(w):
        t = float(rho.inverse(w))
        return float(gs.h(t)) * float(rho.derivative(t))

    new_w = IsotropicScalar(eval=eval_, dx=dx, dspeed=dspeed, fd_step=w_old.fd_step)
    return GeneratingScalar(W=new_w, h=h_new, wv_floor=gs.wv_floor)


def builtin_geodesic() -> GeneratingScalar:
    """W = |v|, h = 0: the geodesic flow, force identically zero."""
    w = IsotropicScalar(
        eval=lambda x, s: s,
        dx=lambda x, s: np.zeros(np.asarray(x).shape[0]),
        dspeed=lambda x, s: 1.0,
    )
    return GeneratingScalar(W=w, h=lambda w_: 0.0)


def builtin_metrizable(f: IsotropicScalar, H: Callable[[float], float]) -> GeneratingScalar:
    """W = |v| exp(-f(x)), h = H.

    ``f`` must depend on position only (its speed slot is ignored by
    convention).  The resulting force is the one whose trajectories are
    geodesics of the conformally scaled metric exp(-2f) g, reparametrized
    through H.
    """

    def eval_(x, s):
        return s * np.exp(-float(f.eval(x, s)))

    def dspeed(x, s):
        return float(np.exp(-float(f.eval(x, s))))

    dx = None
    if f.dx is not None:

        def dx(x, s):
            return -s * np.exp(-float(f.eval(x, s))) * np.asarray(f.dx(x, s), dtype=float)

    w = IsotropicScalar(eval=eval_, dx=dx, dspeed=dspeed, fd_step=f.fd_step)
    return GeneratingScalar(W=w, h=H)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def builtin_nonmetrizable(
    f: IsotropicScalar,
    A_of_speed: Callable[[float], float],
    speed_range: Tuple[float, float] = (0.05, 5.0),
    anchor_count: int = 257,
) -> GeneratingScalar:
    """W = exp(quadrature(|v|) - f(x)), h = 0, for a speed profile A.

    The speed dependence comes from the quadrature of s / A(s) taken from
    the fixed reference speed 1.0; shifting the reference multiplies W by a
    constant, which the gauge freedom absorbs.  Anchor values of the
    quadrature are precomputed once on a uniform grid over ``speed_range``
    by adaptive integration, and evaluations add a short fixed-order
    Gauss-Legendre tail from the nearest anchor, so lookups after
    construction are read-only.

    The generated force is A(|v|) sum_i (df/dx^i)(2 N^i N_k - delta^i_k).
    """
    lo, hi = speed_range
    if not (lo > 0.0 and lo < 1.0 < hi):
        raise QuadratureFailure(
            f"speed_range {speed_range} must be positive and contain the reference speed 1.0"
        )

    def integrand(s):
        return s / A_of_speed(s)

    anchors = np.linspace(lo, hi, anchor_count)
    fine = np.linspace(lo, hi, 8 * anchor_count)
    probe = np.array([A_of_speed(s) for s in fine])
    if (
        not np.all(np.isfinite(probe))
        or np.min(np.abs(probe)) < 1e-12
        or np.min(probe) * np.max(probe) < 0.0
    ):
        worst = fine[int(np.argmin(np.abs(probe)))]
        raise QuadratureFailure(f"speed profile vanishes near speed {worst:.4g}")
    segments = np.empty(anchor_count - 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            for j in range(anchor_count - 1):
                segments[j], _ = quad(integrand, anchors[j], anchors[j + 1])
    except Exception as exc:
        raise QuadratureFailure("adaptive quadrature of the speed profile failed") from exc
    cumulative = np.concatenate([[0.0], np.cumsum(segments)])
    if not np.all(np.isfinite(cumulative)):
        raise QuadratureFailure("speed quadrature produced non-finite values")

    def antiderivative(s: float) -> float:
        # nearest anchor at or below s, clamped to the grid
        j = int(np.clip(np.floor((s - lo) / (hi - lo) * (anchor_count - 1)), 0, anchor_count - 1))
        base = anchors[j]
        half = 0.5 * (s - base)
        mid = 0.5 * (s + base)
        tail = half * float(
            np.sum(_GL_WEIGHTS * np.array([integrand(mid + half * t) for t in _GL_NODES]))
        )
        value = cumulative[j] + tail
        if not np.isfinite(value):
            raise QuadratureFailure(f"speed quadrature non-finite at speed {s:.4g}")
        return value

    offset = antiderivative(1.0)

    def eval_(x, s):
        return float(np.exp(antiderivative(s) - offset - float(f.eval(x, s))))

    def dspeed(x, s):
        return eval_(x, s) * s / float(A_of_speed(s))

    dx = None
    if f.dx is not None:

        def dx(x, s):
            return -eval_(x, s) * np.asarray(f.dx(x, s), dtype=float)

    w = IsotropicScalar(eval=eval_, dx=dx, dspeed=dspeed, fd_step=f.fd_step)
    return GeneratingScalar(W=w, h=lambda w_: 0.0)


def perturbed_field(
    base: ForceField,
    component: int,
    bump: Callable[[MetricField, Array, Array], float],
) -> ForceField:
    """Copy of ``base`` with ``bump`` added to one covector component.

    The result is a plain user field with no derivative closures; it serves
    as a negative control, since generic perturbations leave the family of
    fields admitting the normal shift.
    """

    def eval_(m, x, v):
        out = np.array(base.eval(m, x, v), dtype=float)
        out[component] += float(bump(m, x, v))
        return out

    return ForceField(eval=eval_, label="user")


def coordinate_scalar(index: int, dim: int = 3, coefficient: float = 1.0) -> IsotropicScalar:
    """The position field coefficient * x^index (0-based), with derivatives."""

    def dx(x, s):
        out = np.zeros(dim)
        out[index] = coefficient
        return out

    return IsotropicScalar(
        eval=lambda x, s: coefficient * float(x[index]), dx=dx, dspeed=lambda x, s: 0.0
    )
