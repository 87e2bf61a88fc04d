"""Residual evaluation of the normality equation systems.

A force field belongs to the normal-shift family exactly when four tensor
equations hold: two weak equations tying F to its fiber gradient, and two
additional conditions that require n >= 3.  At the ansatz level the same
content reduces to a projected-Hessian equation for the scalar A, and for
isotropic coefficient fields (a, b) it collapses further to first-order
equations expressed through the operators L_i = d/dx^i + b_i d/dspeed.

Every function here returns raw residuals at a single phase-space point;
``verify`` samples a region quasi-randomly, normalizes by the local size
of F and its derivatives so tolerances are scale-free, and aggregates
sup-norms into a report.

Index conventions for derivative matrices: Dv[r, k] = dF_k/dv^r and
Dx[r, k] = covariant x^r-derivative of F_k, which subtracts both the
fiber transport term Gamma^j_{ri} v^i dF_k/dv^j and the lower-index
correction Gamma^c_{rk} F_c from the raw partial.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import EvaluationFailure
from .extended_fields import (
    ExtendedScalar,
    isotropic_speed_derivative,
    spatial_gradient_isotropic,
    velocity_hessian,
)
from .force_builder import (
    AnsatzField,
    ForceField,
    GeneratingScalar,
    ansatz_A,
    ansatz_from_generator,
    ansatz_scalar,
    as_force_field,
)
from .tensor_core import (
    MetricField,
    christoffel_at,
    inverse_metric_at,
    unit_direction,
)

Array = np.ndarray

MODES = ("analytic", "finite-diff")


@dataclass(frozen=True)
class SampleSpec:
    """Quasi-random sampling plan for residual verification.

    Points are drawn from a Halton sequence over the coordinate ``box``
    crossed with unit directions and speeds in ``speed_range``, so reports
    are deterministic for a fixed seed.  ``mode`` selects between analytic
    derivative closures (where available) and pure finite differencing of
    the field evaluators; the default tolerance is 1e-8 for the former and
    1e-5 for the latter.
    """

    box: Sequence[Sequence[float]]
    count: int = 200
    speed_range: Tuple[float, float] = (0.5, 2.0)
    seed: int = 0
    mode: str = "analytic"
    tolerance: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.count < 1:
            raise ValueError("sample count must be at least 1")
        lo, hi = self.speed_range
        if not (0.0 < lo <= hi):
            raise ValueError("speed_range must be positive and ordered")

    def resolved_tolerance(self) -> float:
        if self.tolerance is not None:
            return float(self.tolerance)
        return 1e-8 if self.mode == "analytic" else 1e-5


@dataclass(frozen=True)
class NormalityReport:
    """Sup-norm residuals of every normality system over a sample set."""

    r_weak1: float
    r_weak2: float
    r_add1: float
    r_add2: float
    r_eq124: float
    r_reduced_b: float
    r_reduced_a: float
    lambda_samples: Array
    sample_count: int
    tolerance_used: float
    passed: bool

    def __post_init__(self):
        values = (
            self.r_weak1,
            self.r_weak2,
            self.r_add1,
            self.r_add2,
            self.r_eq124,
            self.r_reduced_b,
            self.r_reduced_a,
        )
        if not all(np.isfinite(r) and r >= 0.0 for r in values):
            raise ValueError("residual sup-norms must be finite and nonnegative")
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")

    def residuals(self) -> dict:
        return {
            "r_weak1": self.r_weak1,
            "r_weak2": self.r_weak2,
            "r_add1": self.r_add1,
            "r_add2": self.r_add2,
            "r_eq124": self.r_eq124,
            "r_reduced_b": self.r_reduced_b,
            "r_reduced_a": self.r_reduced_a,
        }


def _finite(arr: Array, what: str) -> Array:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationFailure(f"{what} produced a non-finite value")
    return arr


def _force_dv(ff: ForceField, m: MetricField, x: Array, v: Array, fd_step: float) -> Array:
    h = fd_step * max(1.0, float(np.max(np.abs(v))))
    out = np.empty((m.dim, m.dim))
    for r in range(m.dim):
        e = np.zeros(m.dim)
        e[r] = h
        out[r] = (
            np.asarray(ff.eval(m, x, v + e), dtype=float)
            - np.asarray(ff.eval(m, x, v - e), dtype=float)
        ) / (2.0 * h)
    return out


def _force_dx_raw(ff: ForceField, m: MetricField, x: Array, v: Array, fd_step: float) -> Array:
    h = fd_step * max(1.0, float(np.max(np.abs(x))))
    out = np.empty((m.dim, m.dim))
    for r in range(m.dim):
        e = np.zeros(m.dim)
        e[r] = h
        out[r] = (
            np.asarray(ff.eval(m, x + e, v), dtype=float)
            - np.asarray(ff.eval(m, x - e, v), dtype=float)
        ) / (2.0 * h)
    return out


def _derivative_pack(
    ff: ForceField, m: MetricField, x: Array, v: Array, mode: str, fd_step: float = 1e-5
) -> Tuple[Array, Array, Array]:
    """Evaluate F together with its fiber and covariant spatial derivatives."""
    F = _finite(ff.eval(m, x, v), "force field")
    analytic = mode == "analytic"
    if analytic and ff.dv is not None:
        Dv = _finite(ff.dv(m, x, v), "force fiber derivative")
    else:
        Dv = _finite(_force_dv(ff, m, x, v, fd_step), "force fiber difference")
    if analytic and ff.nabla is not None:
        Dx = _finite(ff.nabla(m, x, v), "force spatial derivative")
    else:
        raw = _force_dx_raw(ff, m, x, v, fd_step)
        gamma = christoffel_at(m, x).gamma
        transport = np.einsum("jri,i,jk->rk", gamma, v, Dv)
        twist = np.einsum("crk,c->rk", gamma, F)
        Dx = _finite(raw - transport - twist, "force spatial difference")
    return F, Dv, Dx


def _weak1(F: Array, Dv: Array, pr) -> Array:
    grad_a = (pr.P.T @ F) / pr.speed + Dv @ pr.N_up
    return (F / pr.speed + grad_a) @ pr.P


def _weak2(F: Array, Dv: Array, Dx: Array, pr, ginv: Array) -> Array:
    f_up = ginv @ F
    sym = Dx @ pr.N_up + Dx.T @ pr.N_up - 2.0 * F * float(F @ pr.N_up) / pr.speed**2
    drift = (f_up @ Dv - float(pr.N_up @ Dv @ pr.N_up) * F) / pr.speed
    return (sym + drift) @ pr.P


def _additional1(F: Array, Dv: Array, Dx: Array, pr) -> Array:
    along = pr.N_up @ Dv
    K = np.outer(F, along) / pr.speed - Dx
    G = pr.P.T @ K @ pr.P
    return G - G.T


def _additional2(Dv: Array, pr, ginv: Array, dim: int) -> Array:
    dv_up = Dv @ ginv
    M = pr.P.T @ dv_up @ pr.P.T
    return M.T - (np.trace(M) / (dim - 1)) * pr.P


def residual_weak1(
    F: ForceField, m: MetricField, x: Array, v: Array, *, mode: str = "analytic"
) -> Array:
    """First weak equation: sum_i (F_i/|v| + d(N^j F_j)/dv^i) P^i_k."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    Fv, Dv, _ = _derivative_pack(F, m, x, v, mode)
    return _weak1(Fv, Dv, unit_direction(m, x, v))


def residual_weak2(
    F: ForceField, m: MetricField, x: Array, v: Array, *, mode: str = "analytic"
) -> Array:
    """Second weak equation, mixing covariant spatial and fiber gradients."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    Fv, Dv, Dx = _derivative_pack(F, m, x, v, mode)
    return _weak2(Fv, Dv, Dx, unit_direction(m, x, v), inverse_metric_at(m, x))


def residual_additional1(
    F: ForceField, m: MetricField, x: Array, v: Array, *, mode: str = "analytic"
) -> Array:
    """First additional condition, antisymmetrized over the two projections."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    Fv, Dv, Dx = _derivative_pack(F, m, x, v, mode)
    return _additional1(Fv, Dv, Dx, unit_direction(m, x, v))


def residual_additional2(
    F: ForceField, m: MetricField, x: Array, v: Array, *, mode: str = "analytic"
) -> Array:
    """Second additional condition: the projected fiber gradient of F^i must
    be a multiple of the projector; returns the trace-free part."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _, Dv, _ = _derivative_pack(F, m, x, v, mode)
    return _additional2(Dv, unit_direction(m, x, v), inverse_metric_at(m, x), m.dim)


def residual_eq124(
    A: ExtendedScalar, m: MetricField, x: Array, v: Array, *, mode: str = "analytic"
) -> Tuple[Array, float]:
    """Projected-Hessian equation for the ansatz scalar.

    Returns the matrix sum_rs P^r_sigma (d2A/dv^r dv^s) P^{s eps}
    - lambda P^eps_sigma together with lambda itself, the projected trace
    divided by n - 1.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if mode == "analytic":
        H = velocity_hessian(A, m, x, v)
    else:
        H = velocity_hessian(
            ExtendedScalar(eval=A.eval, fd_step=A.fd_step), m, x, v
        )
    H = _finite(H, "ansatz scalar fiber Hessian")
    pr = unit_direction(m, x, v)
    ginv = inverse_metric_at(m, x)
    p_up = ginv - np.outer(pr.N_up, pr.N_up)
    lam = float(np.einsum("rs,rs->", p_up, H)) / (m.dim - 1)
    return pr.P.T @ H @ p_up - lam * pr.P.T, lam


def residual_reduced(
    af: AnsatzField, m: MetricField, x: Array, v_speed: float
) -> Tuple[Array, Array]:
    """First-order residuals of the isotropic coefficient fields.

    With L_s = d/dx^s + b_s d/dspeed acting on scalars of (x, speed):
    b_residual[r, s] = L_s b_r - L_r b_s (exactly antisymmetric) and
    a_residual[s] = L_s a - a db_s/dspeed.
    """
    x = np.asarray(x, dtype=float)
    a_val = float(af.a.eval(x, v_speed))
    b_val = np.array([c.eval(x, v_speed) for c in af.b])
    a_p = isotropic_speed_derivative(af.a, x, v_speed)
    b_p = np.array([isotropic_speed_derivative(c, x, v_speed) for c in af.b])
    da = spatial_gradient_isotropic(af.a, m, x, v_speed)
    db = np.stack(
        [spatial_gradient_isotropic(c, m, x, v_speed) for c in af.b], axis=1
    )  # db[s, r] = d b_r / d x^s at fixed speed
    L_b = db + np.outer(b_val, b_p)
    b_residual = L_b.T - L_b
    a_residual = da + b_val * a_p - a_val * b_p
    _finite(b_residual, "reduced b residual")
    _finite(a_residual, "reduced a residual")
    return b_residual, a_residual


def sample_states(spec: SampleSpec, m: MetricField) -> list:
    """Deterministic quasi-random (x, v) pairs inside the sampling region."""
    dim = m.dim
    box = np.asarray(spec.box, dtype=float)
    if box.shape != (dim, 2):
        raise ValueError(f"box must have shape ({dim}, 2), got {box.shape}")
    engine = qmc.Halton(d=2 * dim + 1, scramble=True, seed=spec.seed)
    u = engine.random(spec.count)
    xs = box[:, 0] + u[:, :dim] * (box[:, 1] - box[:, 0])
    z = ndtri(np.clip(u[:, dim : 2 * dim], 1e-12, 1.0 - 1e-12))
    lo, hi = spec.speed_range
    speeds = lo + (hi - lo) * u[:, -1]
    states = []
    for x, raw, s in zip(xs, z, speeds):
        if float(np.max(np.abs(raw))) < 1e-12:
            raw = np.ones(dim)
        current = unit_direction(m, x, raw).speed
        states.append((x, raw * (s / current)))
    return states


def verify(
    subject: Union[GeneratingScalar, ForceField],
    m: MetricField,
    sampler: SampleSpec,
) -> NormalityReport:
    """Aggregate all residual families over a quasi-random sample set.

    Accepts either a generating pair, for which the ansatz-level and
    reduced systems are evaluated from the structured coefficients, or a
    bare force field, for which the ansatz scalar is recovered as
    A = sum_i N^i F_i and the reduced systems are skipped (reported as 0).
    Raw residuals at each sample are divided by 1 + max|F| + max of the
    derivative magnitudes, making the tolerances scale-free.
    """
    mode = sampler.mode
    if isinstance(subject, GeneratingScalar):
        ff = as_force_field(subject)
        af = ansatz_from_generator(subject, m)
        if mode == "analytic":
            A = ansatz_scalar(af, m)
        else:
            A = ExtendedScalar(eval=lambda x, v: ansatz_A(af, m, x, v))
    else:
        ff = subject
        af = None

        def a_eval(x, v):
            pr = unit_direction(m, x, v)
            return float(pr.N_up @ np.asarray(ff.eval(m, x, v), dtype=float))

        A = ExtendedScalar(eval=a_eval)

    worst = {
        "weak1": 0.0,
        "weak2": 0.0,
        "add1": 0.0,
        "add2": 0.0,
        "eq124": 0.0,
        "red_b": 0.0,
        "red_a": 0.0,
    }
    lambdas = []
    for x, v in sample_states(sampler, m):
        pr = unit_direction(m, x, v)
        ginv = inverse_metric_at(m, x)
        F, Dv, Dx = _derivative_pack(ff, m, x, v, mode)
        scale = 1.0 + float(np.max(np.abs(F))) + max(
            float(np.max(np.abs(Dv))), float(np.max(np.abs(Dx)))
        )
        worst["weak1"] = max(worst["weak1"], float(np.max(np.abs(_weak1(F, Dv, pr)))) / scale)
        worst["weak2"] = max(
            worst["weak2"], float(np.max(np.abs(_weak2(F, Dv, Dx, pr, ginv)))) / scale
        )
        worst["add1"] = max(
            worst["add1"], float(np.max(np.abs(_additional1(F, Dv, Dx, pr)))) / scale
        )
        worst["add2"] = max(
            worst["add2"],
            float(np.max(np.abs(_additional2(Dv, pr, ginv, m.dim)))) / scale,
        )
        eq_res, lam = residual_eq124(A, m, x, v, mode=mode)
        lambdas.append(lam)
        worst["eq124"] = max(worst["eq124"], float(np.max(np.abs(eq_res))) / scale)
        if af is not None:
            b_res, a_res = residual_reduced(af, m, x, pr.speed)
            worst["red_b"] = max(worst["red_b"], float(np.max(np.abs(b_res))) / scale)
            worst["red_a"] = max(worst["red_a"], float(np.max(np.abs(a_res))) / scale)

    tol = sampler.resolved_tolerance()
    passed = all(value <= tol for value in worst.values())
    return NormalityReport(
        r_weak1=worst["weak1"],
        r_weak2=worst["weak2"],
        r_add1=worst["add1"],
        r_add2=worst["add2"],
        r_eq124=worst["eq124"],
        r_reduced_b=worst["red_b"],
        r_reduced_a=worst["red_a"],
        lambda_samples=np.array(lambdas),
        sample_count=sampler.count,
        tolerance_used=tol,
        passed=passed,
    )
