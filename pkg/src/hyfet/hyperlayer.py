"""Graph-smoothing layers over hyperbolic representations.

Hyperbolic space has no vector addition, so each layer routes every
affine step through tangent space and back:

- ``linear_transform``: pull the point to the origin's tangent space,
  multiply by a weight matrix, push back — ``exp0(W @ log0(p))``;
- ``bias_add``: parallel-transport a learned origin tangent to the
  point's own tangent space, then ``exp`` there (adding the bias at the
  origin instead would twist it differently at every point);
- ``aggregate``: average each mention's neighborhood with the
  row-normalized graph operator. By default tangents are pooled at the
  origin, ``exp0(A @ log0(p))``; the ``self_point`` mode instead pools
  ``log_{x_i}(x_j)`` in each mention's own tangent space, which is more
  faithful to the local geometry but costs one log map per edge;
- ``activate``: ReLU applied in the origin's tangent space.

A layer applies them in that order; a stack of zero layers is the
identity, which is the no-smoothing baseline.

Everything here accepts either plain ndarrays (for oracle checks) or
autodiff tensors (for training); points use the native layout of their
model — ambient ``(n, d+1)`` rows on the hyperboloid, ``(n, d)`` inside
the ball — while tangent vectors *at the origin* are plain ``(n, d)``
coordinate arrays for both models.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from hyfet import autodiff as ad
from hyfet.manifolds import Model, hyperboloid, poincare
from hyfet.manifolds._common import backend


class Basepoint(str, enum.Enum):
    ORIGIN = "origin"
    SELF_POINT = "self_point"


@dataclass(frozen=True)
class Geometry:
    """Uniform functional view of one hyperbolic model at one curvature."""

    model: Model
    K: float = 1.0

    @property
    def is_hyperboloid(self) -> bool:
        return self.model is Model.HYPERBOLOID

    def point_size(self, d: int) -> int:
        """Coordinates per point for tangent dimension d."""
        return d + 1 if self.is_hyperboloid else d

    def origin(self, d: int) -> np.ndarray:
        if self.is_hyperboloid:
            return hyperboloid.origin(d, self.K)
        return poincare.origin(d)

    def exp0(self, u):
        """Origin tangent coordinates (n, d) -> points."""
        if self.is_hyperboloid:
            return hyperboloid.lift(u, self.K)
        return poincare.lift(u, self.K)

    def log0(self, p):
        """Points -> origin tangent coordinates (n, d)."""
        if self.is_hyperboloid:
            return hyperboloid.log0(p, self.K)
        return poincare.log0(p, self.K)

    def exp_at(self, p, v):
        """Exp map at p of a native tangent vector (ambient on hyperboloid)."""
        if self.is_hyperboloid:
            return hyperboloid.exp_map(p, v, self.K)
        return poincare.exp_map(p, v, self.K)

    def log_at(self, p, q):
        """Native tangent vector at p pointing to q."""
        if self.is_hyperboloid:
            return hyperboloid.log_map(p, q, self.K)
        return poincare.log_map(p, q, self.K)

    def carry_from_origin(self, p, b):
        """Parallel-transport origin tangent coordinates b into T_p (native)."""
        if self.is_hyperboloid:
            xp = backend(p, b)
            width = b.shape[-1]
            pad = np.zeros(b.shape[:-1] + (1,))
            ambient = xp.concatenate([pad, b], axis=-1)
            o = hyperboloid.origin(width, self.K)
            v = hyperboloid.transport(o, p, ambient, self.K)
            return hyperboloid.tangent_project(p, v, self.K)
        return poincare.transport_from_origin(p, b, self.K)

    def pin(self, p, v):
        """Re-project a native tangent onto T_p (a no-op inside the ball)."""
        if self.is_hyperboloid:
            return hyperboloid.tangent_project(p, v, self.K)
        return v


class GraphOperator:
    """A fixed row-stochastic smoothing operator with its transpose cached."""

    def __init__(self, mat: sp.csr_matrix):
        self.mat = mat.tocsr()
        self.mat_t = self.mat.T.tocsr()

    @classmethod
    def from_graph(cls, graph) -> "GraphOperator":
        return cls(graph.normalized_csr())

    @classmethod
    def identity(cls, n: int) -> "GraphOperator":
        return cls(sp.identity(n, format="csr"))

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    def apply(self, u):
        """Row-mix a stack of tangent coordinate rows."""
        if isinstance(u, ad.Tensor):
            return ad.sparse_matmul(self.mat, u, self.mat_t)
        return self.mat @ u


def _rows(p, idx):
    if isinstance(p, ad.Tensor):
        return ad.take_rows(p, idx)
    return p[idx]


def _near_identity(rng: np.random.Generator, shape) -> np.ndarray:
    # Start each layer as roughly a pass-through so the untrained stack
    # preserves the encoder signal instead of scrambling it; random linear
    # maps also let tangent norms grow unstably early in training.
    w = rng.uniform(-0.05, 0.05, size=shape)
    k = min(shape)
    w[np.arange(k), np.arange(k)] += 1.0
    return w


class HyperbolicLayer:
    """One smoothing layer: linear map, bias, neighborhood pooling, ReLU."""

    def __init__(
        self,
        geometry: Geometry,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        name: str = "layer",
        basepoint: Basepoint = Basepoint.ORIGIN,
    ):
        self.geometry = geometry
        self.d_in = d_in
        self.d_out = d_out
        self.basepoint = Basepoint(basepoint)
        self.weight = ad.parameter(_near_identity(rng, (d_out, d_in)), f"{name}.weight")
        self.bias = ad.parameter(np.zeros(d_out), f"{name}.bias")

    def params(self) -> dict[str, ad.Tensor]:
        return {self.weight.name: self.weight, self.bias.name: self.bias}

    def linear_transform(self, p):
        u = self.geometry.log0(p)
        if isinstance(u, ad.Tensor) or isinstance(self.weight, ad.Tensor):
            out = ad.matmul(ad.as_tensor(u), ad.transpose(self.weight))
        else:
            out = u @ self.weight.data.T
        return self.geometry.exp0(out)

    def bias_add(self, p):
        b = self.bias
        moved = self.geometry.carry_from_origin(p, ad.reshape(b, (1, self.d_out)))
        return self.geometry.exp_at(p, moved)

    def aggregate(self, p, operator: GraphOperator):
        if self.basepoint is Basepoint.ORIGIN:
            pooled = operator.apply(self.geometry.log0(p))
            return self.geometry.exp0(pooled)
        # self_point: pool log_{x_i}(x_j) over each row's neighbors, in T_{x_i}
        coo = operator.mat.tocoo()
        tangents = self.geometry.log_at(_rows(p, coo.row), _rows(p, coo.col))
        scatter = sp.csr_matrix(
            (coo.data, (coo.row, np.arange(coo.nnz))), shape=(operator.n, coo.nnz)
        )
        if isinstance(tangents, ad.Tensor):
            pooled = ad.sparse_matmul(scatter, tangents, scatter.T.tocsr())
        else:
            pooled = scatter @ tangents
        return self.geometry.exp_at(p, self.geometry.pin(p, pooled))

    def activate(self, p):
        xp = backend(p)
        u = self.geometry.log0(p)
        return self.geometry.exp0(xp.maximum(u, 0.0))

    def forward(self, p, operator: GraphOperator):
        h = self.linear_transform(p)
        h = self.bias_add(h)
        h = self.aggregate(h, operator)
        return self.activate(h)


class RefinementStack:
    """A chain of smoothing layers; an empty chain passes points through."""

    def __init__(
        self,
        geometry: Geometry,
        dims: Sequence[int],
        rng: np.random.Generator,
        basepoint: Basepoint = Basepoint.ORIGIN,
        name: str = "refine",
    ):
        if len(dims) < 1:
            raise ValueError("dims must list the input width, then one width per layer")
        self.geometry = geometry
        self.dims = tuple(int(d) for d in dims)
        self.layers = [
            HyperbolicLayer(
                geometry, self.dims[k], self.dims[k + 1], rng,
                name=f"{name}.{k}", basepoint=basepoint,
            )
            for k in range(len(self.dims) - 1)
        ]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def params(self) -> dict[str, ad.Tensor]:
        out: dict[str, ad.Tensor] = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def forward(self, p, operator: GraphOperator):
        for layer in self.layers:
            p = layer.forward(p, operator)
        return p
