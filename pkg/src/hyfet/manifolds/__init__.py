"""Constant-negative-curvature manifolds: hyperboloid and Poincare ball.

Two layers of API live here:

- The submodules :mod:`hyfet.manifolds.hyperboloid` and
  :mod:`hyfet.manifolds.poincare` hold batched functional primitives on
  raw arrays (or autodiff Tensors) — the representation the training
  pipeline uses.
- This package exposes a validating single-point API on top of them:
  :class:`ManifoldPoint` / :class:`TangentVec` values that check their
  manifold constraints on construction, plus the standard geometric
  operations between them. Tolerances: hyperboloid points must satisfy
  |<p,p>_L + K| <= 1e-9 with p0 > 0, tangent vectors |<v,p>_L| <= 1e-9,
  and ball points |p|^2 < K strictly.

Both layers are pure functions over immutable values; nothing here holds
mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from hyfet.manifolds import hyperboloid as hb
from hyfet.manifolds import poincare as pb
from hyfet.manifolds._common import ManifoldError, check_curvature

__all__ = [
    "Model",
    "Curvature",
    "ManifoldPoint",
    "TangentVec",
    "ManifoldError",
    "minkowski_inner",
    "origin",
    "dist",
    "exp_map",
    "log_map",
    "parallel_transport",
    "lift_from_origin",
    "to_tangent_at_origin",
    "tangent_norm",
    "convert_point",
]

POINT_TOL = 1e-9
TANGENT_TOL = 1e-9


class Model(str, Enum):
    """Which model of hyperbolic space a point's coordinates live in."""

    HYPERBOLOID = "hyperboloid"
    POINCARE_BALL = "poincare"


@dataclass(frozen=True)
class Curvature:
    """Curvature parameter K > 0; the manifold has constant curvature -1/K."""

    K: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "K", check_curvature(self.K))

    @property
    def sqrt_K(self) -> float:
        return float(np.sqrt(self.K))


def _as_coords(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ManifoldError(f"coordinates must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ManifoldError("coordinates contain non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A validated point on one of the two manifold models.

    Hyperboloid coordinates are ambient (d+1 numbers); ball coordinates
    are intrinsic (d numbers). Construction fails if the model constraint
    is violated beyond tolerance.
    """

    model: Model
    coords: np.ndarray
    curvature: Curvature = field(default_factory=Curvature)

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "coords", _as_coords(self.coords))
        K = self.curvature.K
        if self.model is Model.HYPERBOLOID:
            if self.coords.size < 2:
                raise ManifoldError("hyperboloid points need at least 2 ambient coordinates")
            residual = float(hb.invariant_residual(self.coords, K))
            if residual > POINT_TOL:
                raise ManifoldError(
                    f"hyperboloid constraint violated: |<p,p>_L + K| = {residual:.3e} > {POINT_TOL}"
                )
            if self.coords[0] <= 0.0:
                raise ManifoldError("hyperboloid points must have positive time coordinate")
        else:
            sq = float(np.dot(self.coords, self.coords))
            if sq >= K:
                raise ManifoldError(f"ball constraint violated: |p|^2 = {sq:.6e} >= K = {K}")

    @property
    def dim(self) -> int:
        """Intrinsic dimension d."""
        n = self.coords.size
        return n - 1 if self.model is Model.HYPERBOLOID else n

    def is_compatible(self, other: "ManifoldPoint") -> bool:
        return (
            self.model is other.model
            and self.curvature.K == other.curvature.K
            and self.coords.size == other.coords.size
        )


@dataclass(frozen=True, eq=False)
class TangentVec:
    """A tangent vector attached to its base point.

    Hyperboloid tangents are ambient vectors Minkowski-orthogonal to the
    base point; ball tangents are unconstrained d-vectors.
    """

    base: ManifoldPoint
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_coords(self.coords))
        if self.coords.size != self.base.coords.size:
            raise ManifoldError(
                f"tangent dimension {self.coords.size} != base ambient dimension {self.base.coords.size}"
            )
        if self.base.model is Model.HYPERBOLOID:
            dot = float(hb.minkowski_inner(self.coords, self.base.coords))
            if abs(dot) > TANGENT_TOL:
                raise ManifoldError(
                    f"tangency violated: <v, p>_L = {dot:.3e} exceeds tolerance {TANGENT_TOL}"
                )


def _require_compatible(p: ManifoldPoint, q: ManifoldPoint, op: str) -> None:
    if not p.is_compatible(q):
        raise ManifoldError(f"{op}: points disagree in model, curvature, or dimension")


def minkowski_inner(p, q) -> float:
    """<p,q>_L = -p0*q0 + sum_i p_i*q_i on raw ambient vectors."""
    p = _as_coords(p)
    q = _as_coords(q)
    if p.size != q.size:
        raise ManifoldError(f"minkowski_inner: dimension mismatch {p.size} vs {q.size}")
    if p.size < 2:
        raise ManifoldError("minkowski_inner needs dimension >= 2")
    return float(hb.minkowski_inner(p, q))


def origin(model: Model, d: int, curvature: Curvature | None = None) -> ManifoldPoint:
    """The reference point: (sqrt(K), 0, ...) or the ball center."""
    curvature = curvature or Curvature()
    model = Model(model)
    coords = hb.origin(d, curvature.K) if model is Model.HYPERBOLOID else pb.origin(d)
    return ManifoldPoint(model, coords, curvature)


def dist(p: ManifoldPoint, q: ManifoldPoint) -> float:
    """Geodesic distance between two points of the same model/curvature."""
    _require_compatible(p, q, "dist")
    K = p.curvature.K
    if p.model is Model.HYPERBOLOID:
        return float(hb.dist(p.coords, q.coords, K))
    return float(pb.dist(p.coords, q.coords, K))


def exp_map(p: ManifoldPoint, v: TangentVec) -> ManifoldPoint:
    """Follow the geodesic from p with initial velocity v for unit time."""
    if v.base is not p:
        _require_compatible(p, v.base, "exp_map")
        if not np.allclose(v.base.coords, p.coords, atol=1e-9, rtol=0.0):
            raise ManifoldError("exp_map: tangent vector is based at a different point")
    if not np.any(v.coords):
        return p  # exp_p(0) = p, bit-exact
    K = p.curvature.K
    if p.model is Model.HYPERBOLOID:
        return ManifoldPoint(p.model, hb.exp_map(p.coords, v.coords, K), p.curvature)
    return ManifoldPoint(p.model, pb.exp_map(p.coords, v.coords, K), p.curvature)


def log_map(p: ManifoldPoint, q: ManifoldPoint) -> TangentVec:
    """The tangent vector at p whose exp reaches q; length = dist(p, q)."""
    _require_compatible(p, q, "log_map")
    K = p.curvature.K
    if p.model is Model.HYPERBOLOID:
        return TangentVec(p, hb.log_map(p.coords, q.coords, K))
    return TangentVec(p, pb.log_map(p.coords, q.coords, K))


def parallel_transport(src: ManifoldPoint, dst: ManifoldPoint, v: TangentVec) -> TangentVec:
    """Move v isometrically from the tangent space at src to the one at dst."""
    _require_compatible(src, dst, "parallel_transport")
    if v.base is not src and not np.allclose(v.base.coords, src.coords, atol=1e-9, rtol=0.0):
        raise ManifoldError("parallel_transport: vector is not based at the source point")
    K = src.curvature.K
    if src.model is Model.HYPERBOLOID:
        moved = hb.transport(src.coords, dst.coords, v.coords, K)
        # pin tangency against roundoff before validation
        moved = hb.tangent_project(dst.coords, moved, K)
    else:
        moved = pb.transport(src.coords, dst.coords, v.coords, K)
    return TangentVec(dst, moved)


def lift_from_origin(x, curvature: Curvature | None = None, model: Model = Model.HYPERBOLOID) -> ManifoldPoint:
    """Map a d-dim Euclidean vector onto the manifold via exp at the origin."""
    curvature = curvature or Curvature()
    x = _as_coords(x)
    model = Model(model)
    if model is Model.HYPERBOLOID:
        return ManifoldPoint(model, hb.lift(x, curvature.K), curvature)
    return ManifoldPoint(model, pb.lift(x, curvature.K), curvature)


def to_tangent_at_origin(p: ManifoldPoint) -> np.ndarray:
    """Tangent coordinates at the origin; inverse of lift_from_origin."""
    K = p.curvature.K
    if p.model is Model.HYPERBOLOID:
        return np.asarray(hb.log0(p.coords, K))
    return np.asarray(pb.log0(p.coords, K))


def tangent_norm(v: TangentVec) -> float:
    """Geodesic length of a tangent vector (Minkowski or conformal norm)."""
    K = v.base.curvature.K
    if v.base.model is Model.HYPERBOLOID:
        return float(np.sqrt(max(float(hb.minkowski_inner(v.coords, v.coords)), 0.0)))
    return float(pb.tangent_length(v.base.coords, v.coords, K))


def convert_point(p: ManifoldPoint, model: Model) -> ManifoldPoint:
    """Carry a point across the standard hyperboloid <-> ball diffeomorphism."""
    model = Model(model)
    if model is p.model:
        return p
    K = p.curvature.K
    if p.model is Model.HYPERBOLOID:
        return ManifoldPoint(model, hb.to_ball(p.coords, K), p.curvature)
    return ManifoldPoint(model, hb.from_ball(p.coords, K), p.curvature)
