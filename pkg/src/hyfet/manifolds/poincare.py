"""Poincare-ball model of hyperbolic space, curvature -1/K.

Points are d-dimensional vectors strictly inside the ball of radius
sqrt(K); writing c = 1/K, the constraint is c*|y|^2 < 1. The gyrovector
formalism (Mobius addition, gyration) supplies closed forms for the exp
and log maps at arbitrary points and for parallel transport.

Same conventions as the hyperboloid core: last axis = coordinates, inputs
may be numpy arrays or autodiff Tensors, and every point-producing op is
clipped strictly inside the ball by :func:`project`.
"""

from __future__ import annotations

import numpy as np

from hyfet.manifolds._common import ATANH_EPS, BALL_EPS, backend, guard_geodesic, raw, safe_sqrt, zero_safe_sqrt


def origin(d: int) -> np.ndarray:
    """The ball origin (the zero vector)."""
    return np.zeros(d)


def project(y, K: float):
    """Clip a point to radius (1 - 1e-12)*sqrt(K), strictly inside the ball."""
    xp = backend(y)
    max_r = (1.0 - BALL_EPS) * np.sqrt(K)
    r = safe_sqrt(xp, xp.sum(y * y, axis=-1, keepdims=True))
    return y * xp.minimum(1.0, max_r / r)


def conformal_factor(y, K: float, keepdims: bool = True):
    """lambda_y = 2 / (1 - c*|y|^2), the metric's conformal scale at y."""
    xp = backend(y)
    c = 1.0 / K
    return 2.0 / (1.0 - c * xp.sum(y * y, axis=-1, keepdims=keepdims))


def mobius_add(x, y, K: float):
    """Mobius addition x (+) y, the gyrogroup operation of the ball."""
    xp = backend(x, y)
    c = 1.0 / K
    xy = xp.sum(x * y, axis=-1, keepdims=True)
    x2 = xp.sum(x * x, axis=-1, keepdims=True)
    y2 = xp.sum(y * y, axis=-1, keepdims=True)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return num / den


def gyration(u, v, w, K: float):
    """gyr[u, v]w — the Thomas-gyration correction for Mobius addition."""
    xp = backend(u, v, w)
    c = 1.0 / K
    u2 = xp.sum(u * u, axis=-1, keepdims=True)
    v2 = xp.sum(v * v, axis=-1, keepdims=True)
    uv = xp.sum(u * v, axis=-1, keepdims=True)
    uw = xp.sum(u * w, axis=-1, keepdims=True)
    vw = xp.sum(v * w, axis=-1, keepdims=True)
    a = -c * c * uw * v2 + c * vw + 2.0 * c * c * uv * vw
    b = -c * c * vw * u2 - c * uw
    den = 1.0 + 2.0 * c * uv + c * c * u2 * v2
    return w + 2.0 * (a * u + b * v) / den


def dist(x, y, K: float):
    """Geodesic distance (2/sqrt(c)) * artanh(sqrt(c) * |(-x) (+) y|).

    Evaluated in the algebraically equal symmetric form
    2*sqrt(K)*arcsinh( sqrt(c)*|x-y| / sqrt((1-c|x|^2)(1-c|y|^2)) ),
    which is exactly zero at x = y and immune to the artanh blow-up of
    the Mobius form near the boundary.
    """
    xp = backend(x, y)
    c = 1.0 / K
    d = x - y
    dsq = xp.sum(d * d, axis=-1, keepdims=False)
    gx = 1.0 - c * xp.sum(x * x, axis=-1, keepdims=False)
    gy = 1.0 - c * xp.sum(y * y, axis=-1, keepdims=False)
    arg = zero_safe_sqrt(xp, xp.maximum(c * dsq / (gx * gy), 0.0))
    return 2.0 * np.sqrt(K) * xp.arcsinh(arg)


def dist_mobius(x, y, K: float):
    """The artanh/Mobius-addition evaluation of the same distance.

    Kept as an independent route for cross-checking :func:`dist`; prefer
    `dist` everywhere else.
    """
    xp = backend(x, y)
    rc = 1.0 / np.sqrt(K)
    u = mobius_add(-x, y, K)
    r = safe_sqrt(xp, xp.sum(u * u, axis=-1, keepdims=False))
    return (2.0 / rc) * xp.arctanh(xp.minimum(rc * r, 1.0 - ATANH_EPS))


def lift(v, K: float):
    """Exp map at the origin: tanh(sqrt(c)|v|) * v / (sqrt(c)|v|).

    The geodesic distance from the origin to lift(v) is 2|v| (the
    conformal factor at the origin is 2).
    """
    xp = backend(v)
    rc = 1.0 / np.sqrt(K)
    r = safe_sqrt(xp, xp.sum(v * v, axis=-1, keepdims=True))
    guard_geodesic(2.0 * raw(r), K, "lift")
    return project(xp.tanh(rc * r) / (rc * r) * v, K)


def log0(y, K: float):
    """Log map at the origin: artanh(sqrt(c)|y|) * y / (sqrt(c)|y|)."""
    xp = backend(y)
    rc = 1.0 / np.sqrt(K)
    r = safe_sqrt(xp, xp.sum(y * y, axis=-1, keepdims=True))
    return xp.arctanh(xp.minimum(rc * r, 1.0 - ATANH_EPS)) / (rc * r) * y


def exp_map(x, v, K: float):
    """Exponential map at x: x (+) tanh(sqrt(c)*lam_x*|v|/2) * v/(sqrt(c)|v|).

    The geodesic length of v is lam_x * |v| (Euclidean norm scaled by the
    conformal factor); exp_x(0) = x.
    """
    xp = backend(x, v)
    rc = 1.0 / np.sqrt(K)
    r = safe_sqrt(xp, xp.sum(v * v, axis=-1, keepdims=True))
    lam = conformal_factor(x, K)
    guard_geodesic(raw(lam) * raw(r), K, "exp_map")
    step = xp.tanh(rc * lam * r / 2.0) / (rc * r) * v
    return project(mobius_add(x, step, K), K)


def log_map(x, y, K: float):
    """Inverse of exp at x: (2/(sqrt(c)*lam_x)) * artanh(sqrt(c)|u|) * u/|u|

    with u = (-x) (+) y; log_x(x) = 0 and the geodesic length of the
    result equals dist(x, y).
    """
    xp = backend(x, y)
    rc = 1.0 / np.sqrt(K)
    u = mobius_add(-x, y, K)
    r = safe_sqrt(xp, xp.sum(u * u, axis=-1, keepdims=True))
    lam = conformal_factor(x, K)
    return (2.0 / (rc * lam)) * xp.arctanh(xp.minimum(rc * r, 1.0 - ATANH_EPS)) / r * u


def transport(x, y, v, K: float):
    """Parallel transport T_x -> T_y: (lam_x/lam_y) * gyr[y, -x]v."""
    lam_x = conformal_factor(x, K)
    lam_y = conformal_factor(y, K)
    return (lam_x / lam_y) * gyration(y, -x, v, K)


def transport_from_origin(x, v, K: float):
    """Transport from the origin: scales by (1 - c*|x|^2) = 2/lam_x."""
    xp = backend(x, v)
    c = 1.0 / K
    return (1.0 - c * xp.sum(x * x, axis=-1, keepdims=True)) * v


def tangent_length(x, v, K: float, keepdims: bool = False):
    """Riemannian (geodesic) length of tangent v at x: lam_x * |v|."""
    xp = backend(x, v)
    lam = conformal_factor(x, K, keepdims=keepdims)
    return lam * safe_sqrt(xp, xp.sum(v * v, axis=-1, keepdims=keepdims))
