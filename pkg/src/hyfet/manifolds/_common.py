"""Shared numerics for the manifold cores.

The functional cores in :mod:`hyfet.manifolds.hyperboloid` and
:mod:`hyfet.manifolds.poincare` are written once and run on either plain
numpy arrays or :class:`hyfet.autodiff.Tensor` values; ``backend`` picks
the namespace to route operations through. All clamps below are chosen so
that the clamped branch has zero gradient (via the tie-break rules of
``autodiff.maximum``/``minimum``) instead of producing inf.
"""

from __future__ import annotations

import numpy as np

from hyfet import autodiff as ad

# Floor for squared norms before sqrt: keeps 1/norm finite at the origin
# while leaving any realistic value untouched.
TINY = 1e-30

# Poincare-ball points are clipped strictly inside the ball by this margin.
BALL_EPS = 1e-12

# artanh arguments are clamped below 1 by this margin.
ATANH_EPS = 1e-15

# Geodesic-length guard for exponential maps, in units of sqrt(K): beyond
# this, cosh overflow (hyperboloid) or boundary collapse (ball) makes the
# result numerically meaningless, so we fail loudly instead.
MAX_GEODESIC_RATIO = 50.0


class ManifoldError(ValueError):
    """Contract violation in a manifold operation (bad point, dim, or norm)."""


def backend(*xs):
    """Return the op namespace (autodiff or numpy) matching the inputs."""
    return ad if any(isinstance(x, ad.Tensor) for x in xs) else np


def raw(x) -> np.ndarray:
    """Underlying ndarray of a Tensor or array-like, without copying."""
    return x.data if isinstance(x, ad.Tensor) else np.asarray(x, dtype=np.float64)


def check_curvature(K: float) -> float:
    K = float(K)
    if not (K > 0.0) or not np.isfinite(K):
        raise ManifoldError(f"curvature parameter K must be a positive real, got {K}")
    return K


def guard_geodesic(length: np.ndarray, K: float, op: str) -> None:
    """Reject exponential-map arguments too long to represent stably."""
    limit = MAX_GEODESIC_RATIO * np.sqrt(K)
    worst = float(np.max(length)) if length.size else 0.0
    if not np.all(np.isfinite(length)) or worst > limit:
        raise ManifoldError(
            f"{op}: tangent vector of geodesic length {worst:.3e} exceeds the "
            f"stability guard {limit:.3e} (= {MAX_GEODESIC_RATIO}*sqrt(K))"
        )


def safe_sqrt(xp, squared):
    """sqrt with a tiny floor so downstream divisions stay finite."""
    return xp.sqrt(xp.maximum(squared, TINY))


def zero_safe_sqrt(xp, squared):
    """sqrt that is exactly 0 at 0 and keeps a finite derivative there.

    Evaluates x / sqrt(max(x, tiny)), which equals sqrt(x) away from zero
    but avoids the infinite slope of sqrt at the origin — needed when
    differentiating a distance between coincident points (e.g. the
    self-loop edges of a graph), where plain sqrt backpropagates inf * 0.
    """
    return squared / safe_sqrt(xp, squared)
