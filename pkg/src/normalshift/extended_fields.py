"""Extended scalar fields on the tangent bundle and their two gradients.

An extended scalar is a function of position and velocity together.  It has
two covariant gradients: the velocity gradient, which is just the array of
partial derivatives along the fiber coordinates, and the spatial gradient,
which corrects the coordinate x-derivative with a connection transport term

    grad_m phi = d phi / d x^m - sum_{j,k} Gamma^k_mj v^j d phi / d v^k.

For fields that depend on the velocity only through its modulus the
transport term cancels against the metric dependence of the modulus, and
the spatial gradient collapses to the plain x-derivative taken at a fixed
speed.  That cancellation is what :func:`spatial_gradient_isotropic`
implements directly, and what the test suite checks against the long route.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationFailure
from .tensor_core import MetricField, christoffel_at, metric_at, speed_at

Array = np.ndarray


@dataclass(frozen=True)
class ExtendedScalar:
    """Scalar field phi(x, v) on the tangent bundle.

    ``dx`` and ``dv`` are optional analytic partial-derivative closures with
    the same (x, v) signature, returning arrays of length n.  ``dx`` means
    the literal partial derivative holding the velocity components fixed.
    ``dv2`` optionally supplies the full fiber Hessian (n x n).  Whatever is
    absent falls back to central differences with step ``fd_step``.
    """

    eval: Callable[[Array, Array], float]
    dx: Optional[Callable[[Array, Array], Array]] = None
    dv: Optional[Callable[[Array, Array], Array]] = None
    dv2: Optional[Callable[[Array, Array], Array]] = None
    fd_step: float = 1e-5


@dataclass(frozen=True)
class IsotropicScalar:
    """Scalar field W(x, speed) depending on velocity only through |v|.

    Taking the speed as a plain scalar argument makes "depends only on the
    modulus" a fact of the signature instead of a runtime property.
    """

    eval: Callable[[Array, float], float]
    dx: Optional[Callable[[Array, float], Array]] = None
    dspeed: Optional[Callable[[Array, float], float]] = None
    fd_step: float = 1e-5


def _check_finite(value, what: str):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationFailure(f"{what} evaluated to a non-finite value")
    return arr


def velocity_gradient(phi: ExtendedScalar, m: MetricField, x: Array, v: Array) -> Array:
    """Fiber gradient: the covector of partial derivatives d phi / d v^m."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if phi.dv is not None:
        return _check_finite(phi.dv(x, v), "velocity gradient")
    h = phi.fd_step * max(1.0, float(np.max(np.abs(v))))
    out = np.empty(m.dim)
    for k in range(m.dim):
        e = np.zeros(m.dim)
        e[k] = h
        out[k] = (phi.eval(x, v + e) - phi.eval(x, v - e)) / (2.0 * h)
    return _check_finite(out, "velocity gradient")


def _x_partials(phi: ExtendedScalar, m: MetricField, x: Array, v: Array) -> Array:
    if phi.dx is not None:
        return _check_finite(phi.dx(x, v), "x-partials")
    h = phi.fd_step * max(1.0, float(np.max(np.abs(x))))
    out = np.empty(m.dim)
    for k in range(m.dim):
        e = np.zeros(m.dim)
        e[k] = h
        out[k] = (phi.eval(x + e, v) - phi.eval(x - e, v)) / (2.0 * h)
    return _check_finite(out, "x-partials")


def spatial_gradient(phi: ExtendedScalar, m: MetricField, x: Array, v: Array) -> Array:
    """Spatial covariant gradient of an extended scalar.

    Combines the raw coordinate derivative with the velocity transport
    correction -Gamma^k_mj v^j d phi/d v^k.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    raw = _x_partials(phi, m, x, v)
    gamma = christoffel_at(m, x).gamma
    vgrad = velocity_gradient(phi, m, x, v)
    transport = np.einsum("kmj,j,k->m", gamma, v, vgrad)
    return raw - transport


def spatial_gradient_isotropic(
    w: IsotropicScalar, m: MetricField, x: Array, speed: float
) -> Array:
    """Spatial gradient of a modulus-only field: d W / d x^m at fixed speed.

    For this class of fields the connection terms of the full rule cancel,
    so no Christoffel evaluation is needed.
    """
    x = np.asarray(x, dtype=float)
    if speed <= 0.0:
        raise EvaluationFailure("isotropic gradient needs a positive speed")
    if w.dx is not None:
        return _check_finite(w.dx(x, speed), "isotropic x-partials")
    h = w.fd_step * max(1.0, float(np.max(np.abs(x))))
    out = np.empty(m.dim)
    for k in range(m.dim):
        e = np.zeros(m.dim)
        e[k] = h
        out[k] = (w.eval(x + e, speed) - w.eval(x - e, speed)) / (2.0 * h)
    return _check_finite(out, "isotropic x-partials")


def isotropic_speed_derivative(w: IsotropicScalar, x: Array, speed: float) -> float:
    """d W / d speed, analytic when supplied."""
    if w.dspeed is not None:
        value = float(w.dspeed(np.asarray(x, dtype=float), speed))
    else:
        h = w.fd_step * max(1.0, abs(speed))
        value = (w.eval(x, speed + h) - w.eval(x, speed - h)) / (2.0 * h)
    if not np.isfinite(value):
        raise EvaluationFailure("speed derivative evaluated to a non-finite value")
    return value


def isotropic_second_speed_derivative(w: IsotropicScalar, x: Array, speed: float) -> float:
    """d^2 W / d speed^2 by differencing the first derivative.

    The outer step is fd_step^(1/2) scaled by the speed, which balances
    truncation against the noise of the inner derivative.
    """
    if w.dspeed is not None:
        h = w.fd_step * max(1.0, abs(speed))
        value = (float(w.dspeed(x, speed + h)) - float(w.dspeed(x, speed - h))) / (2.0 * h)
    else:
        h = np.sqrt(w.fd_step) * max(1.0, abs(speed))
        value = (w.eval(x, speed + h) - 2.0 * w.eval(x, speed) + w.eval(x, speed - h)) / h**2
    if not np.isfinite(value):
        raise EvaluationFailure("second speed derivative is non-finite")
    return value


def velocity_hessian(
    phi: ExtendedScalar, m: MetricField, x: Array, v: Array, symmetrize: bool = True
) -> Array:
    """Fiber Hessian d^2 phi / d v^r d v^s.

    Uses the analytic ``dv2`` closure when present.  Otherwise differences
    the velocity gradient with an outer step of fd_step^(1/2) times the
    velocity scale, independent of the inner step, plus one Richardson
    level so the outer truncation does not dominate.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if phi.dv2 is not None:
        hess = _check_finite(phi.dv2(x, v), "fiber Hessian")
    else:
        h = np.sqrt(phi.fd_step) * max(1.0, float(np.max(np.abs(v))))
        hess = np.empty((m.dim, m.dim))
        for r in range(m.dim):
            e = np.zeros(m.dim)
            e[r] = h
            coarse = (
                velocity_gradient(phi, m, x, v + e) - velocity_gradient(phi, m, x, v - e)
            ) / (2.0 * h)
            e[r] = 0.5 * h
            fine = (
                velocity_gradient(phi, m, x, v + e) - velocity_gradient(phi, m, x, v - e)
            ) / h
            hess[r] = (4.0 * fine - coarse) / 3.0
    if symmetrize:
        hess = 0.5 * (hess + hess.T)
    return hess


def lift_isotropic(w: IsotropicScalar, m: MetricField) -> ExtendedScalar:
    """Reinterpret a modulus-only field as a full extended scalar.

    The lifted eval plugs |v| computed from the metric into the speed slot.
    When the isotropic field carries analytic partials, the lift carries
    them too: the raw x-partials pick up the metric dependence of the
    modulus through d|v|/dx^m = (d_m g_ij) v^i v^j / (2 |v|).
    """

    def lifted(x, v):
        return w.eval(np.asarray(x, dtype=float), speed_at(m, x, v))

    dx = None
    dv = None
    if w.dx is not None and w.dspeed is not None:
        from .tensor_core import metric_derivatives_at

        def dx(x, v):
            x = np.asarray(x, dtype=float)
            v = np.asarray(v, dtype=float)
            s = speed_at(m, x, v)
            dgd = metric_derivatives_at(m, x)
            ds_dx = np.einsum("mij,i,j->m", dgd, v, v) / (2.0 * s)
            return np.asarray(w.dx(x, s), dtype=float) + float(w.dspeed(x, s)) * ds_dx

        def dv(x, v):
            x = np.asarray(x, dtype=float)
            v = np.asarray(v, dtype=float)
            s = speed_at(m, x, v)
            n_down = metric_at(m, x) @ v / s
            return float(w.dspeed(x, s)) * n_down

    return ExtendedScalar(eval=lifted, dx=dx, dv=dv, fd_step=w.fd_step)
