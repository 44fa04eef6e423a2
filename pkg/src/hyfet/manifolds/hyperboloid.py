"""Hyperboloid model of hyperbolic space, curvature -1/K.

Points live in R^{d+1} with Minkowski self-inner-product -K and positive
time coordinate p0:

    <p, q>_L = -p0*q0 + sum_i p_i*q_i,      <p, p>_L = -K,  p0 > 0.

All functions here are batched functional primitives: the last axis holds
ambient coordinates, leading axes are batch axes, and inputs may be numpy
arrays or autodiff Tensors interchangeably. Every point-producing op ends
with :func:`reproject`, which recomputes the time coordinate from the
spatial part so constraint drift cannot accumulate across layers.

Tangent vectors at the origin o = (sqrt(K), 0, ..., 0) have a zero time
coordinate, so the maps at the origin (`lift`, `log0`) work directly on
d-dimensional spatial coordinates.
"""

from __future__ import annotations

import numpy as np

from hyfet.manifolds._common import TINY, backend, guard_geodesic, raw, safe_sqrt, zero_safe_sqrt


def minkowski_inner(p, q, keepdims: bool = False):
    """<p, q>_L = -p0*q0 + sum over spatial coordinates, along the last axis."""
    xp = backend(p, q)
    prod = p * q
    return xp.sum(prod[..., 1:], axis=-1, keepdims=keepdims) - xp.sum(
        prod[..., :1], axis=-1, keepdims=keepdims
    )


def origin(d: int, K: float) -> np.ndarray:
    """The reference point o = (sqrt(K), 0, ..., 0) in R^{d+1}."""
    o = np.zeros(d + 1)
    o[0] = np.sqrt(K)
    return o


def reproject(p, K: float):
    """Pin the constraint by recomputing p0 = sqrt(K + |spatial|^2)."""
    xp = backend(p)
    s = p[..., 1:]
    t = xp.sqrt(K + xp.sum(s * s, axis=-1, keepdims=True))
    return xp.concatenate([t, s], axis=-1)


def lift(x, K: float):
    """Map a d-dim Euclidean vector onto the manifold: exp at the origin.

    (sqrt(K)*cosh(|x|/sqrt(K)), sqrt(K)*sinh(|x|/sqrt(K)) * x/|x|), with
    the zero vector going to the origin. The geodesic distance from the
    origin to lift(x) is exactly |x|.
    """
    xp = backend(x)
    rK = np.sqrt(K)
    r = safe_sqrt(xp, xp.sum(x * x, axis=-1, keepdims=True))
    guard_geodesic(raw(r), K, "lift")
    s = (rK * xp.sinh(r / rK) / r) * x
    t = xp.sqrt(K + xp.sum(s * s, axis=-1, keepdims=True))
    return xp.concatenate([t, s], axis=-1)


def log0(p, K: float):
    """Tangent coordinates at the origin: the inverse of :func:`lift`.

    Uses the arcsinh form sqrt(K)*arcsinh(|s|/sqrt(K)) * s/|s| (s the
    spatial part), which is smooth at the origin where the arccosh form
    has an unbounded derivative.
    """
    xp = backend(p)
    rK = np.sqrt(K)
    s = p[..., 1:]
    r = safe_sqrt(xp, xp.sum(s * s, axis=-1, keepdims=True))
    return (rK * xp.arcsinh(r / rK) / r) * s


def dist(p, q, K: float):
    """Geodesic distance sqrt(K) * arccosh(-<p,q>_L / K).

    Evaluated in the algebraically equal form
    2*sqrt(K)*arcsinh(|p - q|_L / (2*sqrt(K))), which is exactly symmetric,
    exactly zero at p = q, and well-conditioned near coincident points
    where arccosh(1 + eps) loses half the significant digits. The clamp of
    the arccosh argument to [1, inf) becomes clamping |p-q|_L^2 to [0, inf).
    """
    xp = backend(p, q)
    d = p - q
    sq = xp.maximum(minkowski_inner(d, d), 0.0)
    return 2.0 * np.sqrt(K) * xp.arcsinh(zero_safe_sqrt(xp, sq) / (2.0 * np.sqrt(K)))


def exp_map(p, v, K: float):
    """Exponential map at p applied to an ambient tangent vector v.

    cosh(|v|_L/sqrt(K)) * p + sqrt(K)*sinh(|v|_L/sqrt(K)) * v/|v|_L with
    |v|_L the Minkowski norm; exp_p(0) = p.
    """
    xp = backend(p, v)
    rK = np.sqrt(K)
    r = safe_sqrt(xp, minkowski_inner(v, v, keepdims=True))
    guard_geodesic(raw(r), K, "exp_map")
    out = xp.cosh(r / rK) * p + (rK * xp.sinh(r / rK) / r) * v
    return reproject(out, K)


def log_map(p, q, K: float):
    """Inverse of exp at p: the tangent vector reaching q, of length dist(p,q).

    d(p,q) * u / |u|_L with u = q + (<p,q>_L / K) * p, the component of q
    Minkowski-orthogonal to p; log_p(p) = 0.
    """
    xp = backend(p, q)
    inner = minkowski_inner(p, q, keepdims=True)
    u = q + (inner / K) * p
    unorm = safe_sqrt(xp, minkowski_inner(u, u, keepdims=True))
    diff = p - q
    dsq = xp.maximum(minkowski_inner(diff, diff, keepdims=True), 0.0)
    d = 2.0 * np.sqrt(K) * xp.arcsinh(zero_safe_sqrt(xp, dsq) / (2.0 * np.sqrt(K)))
    return (d / unorm) * u


def transport(x, y, v, K: float):
    """Parallel transport of tangent v from T_x to T_y along the geodesic.

    v + <y,v>_L / (K - <x,y>_L) * (x + y). Preserves Minkowski inner
    products exactly and reduces to the identity at x = y.
    """
    num = minkowski_inner(y, v, keepdims=True)
    den = K - minkowski_inner(x, y, keepdims=True)
    return v + (num / den) * (x + y)


def tangent_project(p, v, K: float):
    """Project an ambient vector onto the tangent space at p."""
    return v + (minkowski_inner(p, v, keepdims=True) / K) * p


def to_ball(p, K: float):
    """Diffeomorphism onto the Poincare ball: y = sqrt(K)*s / (sqrt(K) + p0)."""
    rK = np.sqrt(K)
    return rK * p[..., 1:] / (rK + p[..., :1])


def from_ball(y, K: float):
    """Inverse diffeomorphism from ball coordinates back to the hyperboloid."""
    xp = backend(y)
    c = 1.0 / K
    denom = 1.0 - c * xp.sum(y * y, axis=-1, keepdims=True)
    t = np.sqrt(K) * (2.0 / denom - 1.0)
    return xp.concatenate([t, (2.0 / denom) * y], axis=-1)


def invariant_residual(p, K: float) -> np.ndarray:
    """|<p,p>_L + K| per point; zero exactly on the manifold."""
    arr = raw(p)
    return np.abs(minkowski_inner(arr, arr) + K)
