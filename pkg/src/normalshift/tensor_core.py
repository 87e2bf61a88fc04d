"""Chart-level Riemannian machinery.

Everything here lives in a single coordinate chart: the metric is a
user-supplied closure ``x -> g_ij(x)`` and all derived objects (the inverse
metric, Christoffel symbols, the unit velocity direction N and the orthogonal
projector P onto the hyperplane perpendicular to the velocity) are evaluated
pointwise from it.  Index conventions:

* ``gamma[k, i, j]`` holds the connection component with upper index k and
  lower indices (i, j).
* ``dg(x)[m, i, j]`` holds the coordinate derivative of ``g_ij`` along
  ``x^m``.

All functions are pure; the descriptor dataclasses are frozen.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import (
    AsymmetricMetric,
    DimensionTooSmall,
    NotPositiveDefinite,
    ZeroVelocity,
)

ASYMMETRY_TOL = 1e-12
SPEED_FLOOR = 1e-12


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric on one chart.

    Parameters
    ----------
    dim : int
        Chart dimension n, at least 3.
    g : callable
        Maps a coordinate array of shape (n,) to the n x n matrix g_ij.
        The result must be symmetric to within ``ASYMMETRY_TOL`` and
        positive-definite everywhere it is evaluated.
    dg : callable, optional
        Analytic coordinate derivatives, shape (n, n, n) with layout
        ``dg(x)[m, i, j] = d g_ij / d x^m``.  When absent, derivatives fall
        back to central differences of ``g`` with one Richardson
        extrapolation level.
    fd_step : float
        Step for the finite-difference fallback.
    """

    dim: int
    g: Callable[[np.ndarray], np.ndarray]
    dg: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.dim < 3:
            raise DimensionTooSmall(
                f"chart dimension must be at least 3, got {self.dim}"
            )
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")


class Christoffel(NamedTuple):
    """Connection components ``gamma[k, i, j]``, symmetric in (i, j)."""

    gamma: np.ndarray


class Projector(NamedTuple):
    """Unit direction and the projector orthogonal to it.

    ``P`` holds mixed components P^i_k (row = upper index), ``N_up`` the
    contravariant direction N^i, ``N_down`` the covariant N_i, and ``speed``
    the velocity modulus used to build them.
    """

    P: np.ndarray
    N_up: np.ndarray
    N_down: np.ndarray
    speed: float


# Metric closures are pure, so point evaluations are memoized on the
# position bytes; integrators evaluate several tensors at one point and
# hit the cache for all but the first.  Cached arrays are read-only.
@lru_cache(maxsize=4096)
def _metric_cached(m: MetricField, xb: bytes) -> np.ndarray:
    x = np.frombuffer(xb, dtype=float).copy()
    gmat = np.asarray(m.g(x), dtype=float)
    if gmat.shape != (m.dim, m.dim):
        raise AsymmetricMetric(
            f"metric closure returned shape {gmat.shape}, expected {(m.dim, m.dim)}"
        )
    asym = np.max(np.abs(gmat - gmat.T))
    if asym >= ASYMMETRY_TOL:
        raise AsymmetricMetric(f"metric asymmetry {asym:.3e} exceeds tolerance")
    gmat = 0.5 * (gmat + gmat.T)
    try:
        np.linalg.cholesky(gmat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"metric not positive-definite at x={x}") from exc
    gmat.setflags(write=False)
    return gmat


@lru_cache(maxsize=4096)
def _inverse_cached(m: MetricField, xb: bytes) -> np.ndarray:
    gmat = _metric_cached(m, xb)
    ginv = np.linalg.inv(gmat)
    ginv = 0.5 * (ginv + ginv.T)
    residual = np.max(np.abs(gmat @ ginv - np.eye(m.dim)))
    if residual >= 1e-10:
        raise NotPositiveDefinite(
            f"metric too ill-conditioned to invert: residual {residual:.3e}"
        )
    ginv.setflags(write=False)
    return ginv


def metric_at(m: MetricField, x: np.ndarray) -> np.ndarray:
    """Evaluate the metric matrix at ``x``.

    Asymmetry below ``ASYMMETRY_TOL`` is silently symmetrized; anything
    larger raises :class:`AsymmetricMetric`.  Positive-definiteness is
    checked by attempting a Cholesky factorization.  The returned array
    is shared and read-only.
    """
    x = np.ascontiguousarray(x, dtype=float)
    return _metric_cached(m, x.tobytes())


def inverse_metric_at(m: MetricField, x: np.ndarray) -> np.ndarray:
    """Inverse metric g^ij at ``x``, verified by multiplying back."""
    x = np.ascontiguousarray(x, dtype=float)
    return _inverse_cached(m, x.tobytes())


def metric_derivatives_at(m: MetricField, x: np.ndarray) -> np.ndarray:
    """Coordinate derivatives ``D[m, i, j] = d g_ij / d x^m``.

    Uses the analytic closure when supplied.  Otherwise central differences
    of the (symmetrized) metric with one Richardson extrapolation level,
    which upgrades the truncation error from O(h^2) to O(h^4).
    """
    x = np.asarray(x, dtype=float)
    if m.dg is not None:
        d = np.asarray(m.dg(x), dtype=float)
        if d.shape != (m.dim, m.dim, m.dim):
            raise AsymmetricMetric(
                f"dg closure returned shape {d.shape}, expected cube of dim {m.dim}"
            )
    else:
        h = m.fd_step
        d = np.empty((m.dim, m.dim, m.dim))
        for k in range(m.dim):
            step = np.zeros(m.dim)
            step[k] = h
            coarse = (metric_at(m, x + step) - metric_at(m, x - step)) / (2.0 * h)
            step[k] = 0.5 * h
            fine = (metric_at(m, x + step) - metric_at(m, x - step)) / h
            d[k] = (4.0 * fine - coarse) / 3.0
    # Exact symmetry in the metric index pair keeps the Christoffel
    # construction below exactly symmetric in its lower indices.
    return 0.5 * (d + d.transpose(0, 2, 1))


def christoffel_at(m: MetricField, x: np.ndarray) -> Christoffel:
    """Christoffel symbols of the metric connection at ``x``.

    Implements gamma^k_ij = (1/2) sum_s g^ks (d_i g_sj + d_j g_is - d_s g_ij)
    with the lower-index symmetry exact by construction.
    """
    ginv = inverse_metric_at(m, x)
    d = metric_derivatives_at(m, x)
    n = m.dim
    # t[k, i, j] = sum_s g^ks d_i g_sj ; its (i <-> j) transpose supplies the
    # second term, and the third is symmetric because d is.
    t = (ginv @ d.transpose(1, 0, 2).reshape(n, n * n)).reshape(n, n, n)
    third = (ginv @ d.reshape(n, n * n)).reshape(n, n, n)
    gamma = 0.5 * (t + t.transpose(0, 2, 1) - third)
    return Christoffel(gamma=gamma)


def speed_at(m: MetricField, x: np.ndarray, v: np.ndarray) -> float:
    """Velocity modulus |v| = sqrt(g_ij v^i v^j) at ``x``."""
    gmat = metric_at(m, x)
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v @ gmat @ v))


def unit_direction(
    m: MetricField, x: np.ndarray, v: np.ndarray, speed_floor: float = SPEED_FLOOR
) -> Projector:
    """Unit direction N along ``v`` and the projector P = I - N (x) N.

    Raises :class:`ZeroVelocity` when the velocity modulus is at or below
    ``speed_floor``; the zero section of the tangent bundle is excluded from
    the theory.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    gmat = metric_at(m, x)
    speed = float(np.sqrt(v @ gmat @ v))
    if speed <= speed_floor:
        raise ZeroVelocity(f"velocity modulus {speed:.3e} at or below floor")
    n_up = v / speed
    n_down = gmat @ n_up
    proj = np.eye(m.dim) - np.outer(n_up, n_down)
    return Projector(P=proj, N_up=n_up, N_down=n_down, speed=speed)


def lower_index(m: MetricField, x: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Convert a vector to a covector: w_i = g_ij w^j."""
    return metric_at(m, x) @ np.asarray(vec, dtype=float)


def raise_index(m: MetricField, x: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Convert a covector to a vector: w^i = g^ij w_j."""
    return inverse_metric_at(m, x) @ np.asarray(cov, dtype=float)
