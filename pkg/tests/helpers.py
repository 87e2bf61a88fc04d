"""Shared metric fixtures for the test suite.

Three chart metrics recur throughout: flat Euclidean, the conformally flat
metric exp(-2 f) * I with f = x^1, and the diagonal metric
diag(1, (x^1)^2, 1).  The curved ones carry analytic derivative closures so
finite-difference paths can be checked against them.
"""

import numpy as np

from normalshift.tensor_core import MetricField


def euclidean_metric(dim=3):
    eye = np.eye(dim)
    zero = np.zeros((dim, dim, dim))
    return MetricField(dim=dim, g=lambda x: eye.copy(), dg=lambda x: zero.copy())


def conformal_metric(dim=3, analytic=True):
    """g = exp(-2 x^1) * I."""

    def g(x):
        return np.exp(-2.0 * x[0]) * np.eye(dim)

    def dg(x):
        d = np.zeros((dim, dim, dim))
        d[0] = -2.0 * np.exp(-2.0 * x[0]) * np.eye(dim)
        return d

    return MetricField(dim=dim, g=g, dg=dg if analytic else None)


def wavy_conformal_metric(dim=3):
    """g = exp(-2 f) * I with f = 0.3 sin(x^1 + 2 x^2) + 0.1 x^3.

    A conformal factor with genuinely mixed partial derivatives, for tests
    where f = x^1 would be too forgiving.
    """

    def f(x):
        return 0.3 * np.sin(x[0] + 2.0 * x[1]) + 0.1 * x[2]

    def grad_f(x):
        c = 0.3 * np.cos(x[0] + 2.0 * x[1])
        return np.array([c, 2.0 * c, 0.1] + [0.0] * (dim - 3))

    def g(x):
        return np.exp(-2.0 * f(x)) * np.eye(dim)

    def dg(x):
        factor = np.exp(-2.0 * f(x))
        grad = grad_f(x)
        d = np.zeros((dim, dim, dim))
        for k in range(dim):
            d[k] = -2.0 * grad[k] * factor * np.eye(dim)
        return d

    return MetricField(dim=dim, g=g, dg=dg)


def diagonal_metric(analytic=True):
    """g = diag(1, (x^1)^2, 1); evaluate at x^1 > 0 only."""

    def g(x):
        return np.diag([1.0, x[0] ** 2, 1.0])

    def dg(x):
        d = np.zeros((3, 3, 3))
        d[0, 1, 1] = 2.0 * x[0]
        return d

    return MetricField(dim=3, g=g, dg=dg if analytic else None)


def random_point(rng, box):
    """Uniform draw from a box given as an (n, 2) array of [lo, hi] rows."""
    box = np.asarray(box, dtype=float)
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(box.shape[0])


def random_velocity(rng, m, x, speed_lo=0.5, speed_hi=2.0):
    """Random velocity with metric modulus uniformly inside [lo, hi]."""
    from normalshift.tensor_core import metric_at

    while True:
        raw = rng.standard_normal(m.dim)
        norm = float(np.sqrt(raw @ metric_at(m, x) @ raw))
        if norm > 1e-6:
            break
    target = speed_lo + (speed_hi - speed_lo) * rng.random()
    return raw * (target / norm)
