"""Smoothing-layer oracle checks, equivariance, locality, and gradients.

The reference implementations below evaluate every map row by row with
textbook formulas (and the arccosh route for the hyperboloid log, where
the library uses the arcsinh form), so they share no code path with the
module under test.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from hyfet import autodiff as ad
from hyfet.graphbuild import GraphVariant, MentionGraph
from hyfet.hyperlayer import (
    Basepoint,
    Geometry,
    GraphOperator,
    HyperbolicLayer,
    RefinementStack,
)
from hyfet.manifolds import Model, hyperboloid, poincare

from helpers import fd_check_params

K = 1.3


# -- row-wise reference formulas ----------------------------------------------


def mink(u, v):
    return -u[0] * v[0] + u[1:] @ v[1:]


def hyp_log0_ref(p, K):
    s = p[1:]
    ns = np.linalg.norm(s)
    if ns == 0.0:
        return np.zeros_like(s)
    d = np.sqrt(K) * np.arccosh(max(p[0] / np.sqrt(K), 1.0))
    return d * s / ns


def hyp_exp0_ref(u, K):
    r = np.linalg.norm(u)
    rK = np.sqrt(K)
    if r == 0.0:
        return np.concatenate([[rK], np.zeros_like(u)])
    return np.concatenate([[rK * np.cosh(r / rK)], rK * np.sinh(r / rK) * u / r])


def hyp_exp_ref(p, v, K):
    rK = np.sqrt(K)
    r = np.sqrt(max(mink(v, v), 0.0))
    if r == 0.0:
        return p
    return np.cosh(r / rK) * p + rK * np.sinh(r / rK) * v / r


def hyp_carry_ref(p, b, K):
    o = np.concatenate([[np.sqrt(K)], np.zeros_like(b)])
    v = np.concatenate([[0.0], b])
    return v + mink(p, v) / (K - mink(o, p)) * (o + p)


def ball_log0_ref(y, K):
    rc = 1.0 / np.sqrt(K)
    r = np.linalg.norm(y)
    if r == 0.0:
        return np.zeros_like(y)
    return np.arctanh(rc * r) / (rc * r) * y


def ball_exp0_ref(v, K):
    rc = 1.0 / np.sqrt(K)
    r = np.linalg.norm(v)
    if r == 0.0:
        return np.zeros_like(v)
    return np.tanh(rc * r) / (rc * r) * v


def mobius_ref(x, y, c):
    xy, x2, y2 = x @ y, x @ x, y @ y
    num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
    return num / (1 + 2 * c * xy + c * c * x2 * y2)


def ball_exp_ref(x, v, K):
    c = 1.0 / K
    r = np.linalg.norm(v)
    if r == 0.0:
        return x
    lam = 2.0 / (1.0 - c * (x @ x))
    step = np.tanh(np.sqrt(c) * lam * r / 2.0) / (np.sqrt(c) * r) * v
    return mobius_ref(x, step, c)


def layer_forward_ref(points, W, b, A_dense, model, K):
    hyp = model is Model.HYPERBOLOID
    log0 = hyp_log0_ref if hyp else ball_log0_ref
    exp0 = hyp_exp0_ref if hyp else ball_exp0_ref
    h = np.stack([exp0(W @ log0(p, K), K) for p in points])
    moved = []
    for p in h:
        if hyp:
            moved.append(hyp_exp_ref(p, hyp_carry_ref(p, b, K), K))
        else:
            c = 1.0 / K
            moved.append(ball_exp_ref(p, (1.0 - c * (p @ p)) * b, K))
    h = np.stack(moved)
    t = A_dense @ np.stack([log0(p, K) for p in h])
    h = np.stack([exp0(row, K) for row in t])
    return np.stack([exp0(np.maximum(log0(p, K), 0.0), K) for p in h])


MODELS = [Model.HYPERBOLOID, Model.POINCARE_BALL]


def random_points(geometry, n, d, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return geometry.exp0(rng.normal(scale=scale, size=(n, d)))


def line_graph_operator(n=3):
    graph = MentionGraph(
        n=n, variant=GraphVariant.PLAIN, delta=0.5, seed=None,
        ei=np.arange(n - 1), ej=np.arange(1, n), weights=np.ones(n - 1),
    )
    return GraphOperator.from_graph(graph)


class TestGeometryAdapter:
    @pytest.mark.parametrize("model", MODELS)
    def test_exp0_log0_roundtrip(self, model):
        g = Geometry(model, K)
        u = np.random.default_rng(0).normal(scale=0.8, size=(6, 4))
        np.testing.assert_allclose(g.log0(g.exp0(u)), u, atol=1e-9)

    @pytest.mark.parametrize("model", MODELS)
    def test_carry_from_origin_matches_reference(self, model):
        g = Geometry(model, K)
        p = random_points(g, 4, 3, seed=1)
        b = np.array([0.2, -0.1, 0.05])
        got = g.carry_from_origin(p, b[None, :])
        for i in range(4):
            if model is Model.HYPERBOLOID:
                expect = hyp_carry_ref(p[i], b, K)
            else:
                expect = (1.0 - (p[i] @ p[i]) / K) * b
            np.testing.assert_allclose(got[i], expect, atol=1e-12)

    def test_point_sizes(self):
        assert Geometry(Model.HYPERBOLOID, K).point_size(4) == 5
        assert Geometry(Model.POINCARE_BALL, K).point_size(4) == 4


class TestLayerPieces:
    @pytest.mark.parametrize("model", MODELS)
    def test_identity_weight_keeps_points(self, model):
        g = Geometry(model, K)
        rng = np.random.default_rng(2)
        layer = HyperbolicLayer(g, 3, 3, rng)
        layer.weight.data[:] = np.eye(3)
        p = random_points(g, 5, 3, seed=3)
        out = layer.linear_transform(p)
        np.testing.assert_allclose(out.data, p, atol=1e-9)

    def test_doubling_weight_doubles_geodesic_reach(self):
        # 1-D hyperboloid: the point at distance 1 moves to distance 2
        g = Geometry(Model.HYPERBOLOID, 1.0)
        layer = HyperbolicLayer(g, 1, 1, np.random.default_rng(0))
        layer.weight.data[:] = [[2.0]]
        p = np.array([[np.cosh(1.0), np.sinh(1.0)]])
        out = layer.linear_transform(p)
        np.testing.assert_allclose(out.data, [[np.cosh(2.0), np.sinh(2.0)]], atol=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    def test_zero_bias_is_identity(self, model):
        g = Geometry(model, K)
        layer = HyperbolicLayer(g, 3, 3, np.random.default_rng(4))
        p = random_points(g, 5, 3, seed=5)
        np.testing.assert_allclose(layer.bias_add(p).data, p, atol=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    def test_identity_operator_aggregation_is_identity(self, model):
        g = Geometry(model, K)
        layer = HyperbolicLayer(g, 3, 3, np.random.default_rng(6))
        p = random_points(g, 5, 3, seed=7)
        out = layer.aggregate(p, GraphOperator.identity(5))
        np.testing.assert_allclose(out, p, atol=1e-9)

    @pytest.mark.parametrize("model", MODELS)
    def test_self_point_identity_operator_is_exact(self, model):
        g = Geometry(model, K)
        layer = HyperbolicLayer(
            g, 3, 3, np.random.default_rng(6), basepoint=Basepoint.SELF_POINT
        )
        p = random_points(g, 5, 3, seed=8)
        out = layer.aggregate(p, GraphOperator.identity(5))
        np.testing.assert_allclose(out, p, atol=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    def test_basepoint_modes_differ_on_real_graphs(self, model):
        g = Geometry(model, K)
        rng = np.random.default_rng(9)
        origin_layer = HyperbolicLayer(g, 3, 3, rng, basepoint=Basepoint.ORIGIN)
        self_layer = HyperbolicLayer(g, 3, 3, rng, basepoint=Basepoint.SELF_POINT)
        p = random_points(g, 3, 3, seed=10, scale=0.9)
        op = line_graph_operator()
        a = origin_layer.aggregate(p, op)
        b = self_layer.aggregate(p, op)
        assert np.abs(np.asarray(a) - np.asarray(b)).max() > 1e-4

    @pytest.mark.parametrize("model", MODELS)
    def test_activation_fixes_positive_tangents(self, model):
        g = Geometry(model, K)
        layer = HyperbolicLayer(g, 3, 3, np.random.default_rng(11))
        u = np.abs(np.random.default_rng(12).normal(size=(4, 3)))
        p = g.exp0(u)
        np.testing.assert_allclose(layer.activate(p), p, atol=1e-9)
        # negative tangent coordinates are clipped to the origin
        q = g.exp0(-u)
        np.testing.assert_allclose(layer.activate(q), np.broadcast_to(g.origin(3), q.shape), atol=1e-9)


class TestLayerForwardOracle:
    @pytest.mark.parametrize("model", MODELS)
    def test_three_node_line_graph(self, model):
        g = Geometry(model, K)
        rng = np.random.default_rng(13)
        layer = HyperbolicLayer(g, 4, 4, rng)
        layer.bias.data[:] = rng.normal(scale=0.05, size=4)
        p = random_points(g, 3, 4, seed=14)
        op = line_graph_operator()
        out = layer.forward(p, op)
        expect = layer_forward_ref(
            np.asarray(p), layer.weight.data, layer.bias.data, op.mat.toarray(), model, K
        )
        np.testing.assert_allclose(out.data, expect, atol=1e-9)

    @pytest.mark.parametrize("model", MODELS)
    def test_permutation_equivariance(self, model):
        g = Geometry(model, K)
        rng = np.random.default_rng(15)
        layer = HyperbolicLayer(g, 4, 3, rng)
        layer.bias.data[:] = rng.normal(scale=0.05, size=3)
        p = random_points(g, 5, 4, seed=16)
        graph = MentionGraph(
            n=5, variant=GraphVariant.ATTENTIVE, delta=0.5, seed=None,
            ei=np.array([0, 0, 1, 3]), ej=np.array([1, 2, 4, 4]),
            weights=np.array([0.9, 0.4, 0.7, 0.2]),
        )
        op = GraphOperator.from_graph(graph)
        perm = np.array([3, 0, 4, 1, 2])
        a_perm = op.mat.toarray()[perm][:, perm]
        out = layer.forward(p, op).data
        out_perm = layer.forward(p[perm], GraphOperator(sp.csr_matrix(a_perm))).data
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("basepoint", [Basepoint.ORIGIN, Basepoint.SELF_POINT])
    def test_locality_of_one_layer(self, model, basepoint):
        # node 0 and node 2 are not adjacent in the line graph, so
        # perturbing mention 2 cannot change mention 0's output
        g = Geometry(model, K)
        layer = HyperbolicLayer(g, 4, 4, np.random.default_rng(17), basepoint=basepoint)
        p = np.asarray(random_points(g, 3, 4, seed=18))
        op = line_graph_operator()
        base = layer.forward(p, op).data
        q = p.copy()
        q[2] = np.asarray(random_points(g, 1, 4, seed=19))[0]
        moved = layer.forward(q, op).data
        np.testing.assert_array_equal(moved[0], base[0])
        assert np.abs(moved[2] - base[2]).max() > 1e-6

    @pytest.mark.parametrize("model", MODELS)
    def test_outputs_stay_on_manifold(self, model):
        g = Geometry(model, K)
        rng = np.random.default_rng(20)
        stack = RefinementStack(g, [4, 4, 4], rng)
        for layer in stack.layers:
            layer.bias.data[:] = rng.normal(scale=0.1, size=4)
        p = random_points(g, 20, 4, seed=21, scale=1.0)
        out = np.asarray(stack.forward(p, line_graph_operator(20)).data)
        if model is Model.HYPERBOLOID:
            resid = np.abs(hyperboloid.invariant_residual(out, K)).max()
            assert resid <= 1e-9
        else:
            assert (np.linalg.norm(out, axis=1) ** 2 < K).all()


class TestStack:
    def test_zero_layers_pass_through(self):
        g = Geometry(Model.HYPERBOLOID, K)
        stack = RefinementStack(g, [4], np.random.default_rng(0))
        p = ad.as_tensor(random_points(g, 3, 4, seed=22))
        assert stack.n_layers == 0
        assert stack.forward(p, GraphOperator.identity(3)) is p
        assert stack.params() == {}

    def test_dims_must_be_nonempty(self):
        with pytest.raises(ValueError):
            RefinementStack(Geometry(Model.HYPERBOLOID, K), [], np.random.default_rng(0))

    def test_width_changes_flow_through(self):
        g = Geometry(Model.POINCARE_BALL, K)
        stack = RefinementStack(g, [6, 4, 2], np.random.default_rng(1))
        p = random_points(g, 5, 6, seed=23)
        out = stack.forward(p, GraphOperator.identity(5))
        assert out.shape == (5, 2)
        assert set(stack.params()) == {
            "refine.0.weight", "refine.0.bias", "refine.1.weight", "refine.1.bias",
        }


class TestGradients:
    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("basepoint", [Basepoint.ORIGIN, Basepoint.SELF_POINT])
    def test_stack_parameter_gradients(self, model, basepoint):
        g = Geometry(model, K)
        rng = np.random.default_rng(24)
        stack = RefinementStack(g, [4, 4, 3], rng, basepoint=basepoint)
        for layer in stack.layers:
            layer.bias.data[:] = rng.normal(scale=0.05, size=layer.d_out)
        p = random_points(g, 5, 4, seed=25)
        op = line_graph_operator(5)

        def forward():
            out = stack.forward(ad.as_tensor(p), op)
            u = g.log0(out)
            return ad.sum(u * u)

        fd_check_params(stack.params(), forward, eps=1e-6, rtol=1e-4, atol=1e-8)

    @pytest.mark.parametrize("model", MODELS)
    def test_gradient_flows_into_inputs(self, model):
        g = Geometry(model, K)
        stack = RefinementStack(g, [3, 3], np.random.default_rng(26))
        p = ad.as_tensor(np.asarray(random_points(g, 4, 3, seed=27)))
        p.requires_grad = True
        out = stack.forward(p, line_graph_operator(4))
        ad.sum(out * out).backward()
        assert p.grad is not None and np.isfinite(p.grad).all()
        assert np.abs(p.grad).max() > 0
