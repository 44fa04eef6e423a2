"""Shared test utilities: finite-difference gradient checking."""

import numpy as np

from hyfet import autodiff as ad


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar-valued f at x (mutates a copy)."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def check_gradients(build, args, atol=1e-7, rtol=1e-5, eps=1e-6):
    """Compare backprop gradients of scalar build(*tensors) against FD.

    `build` maps len(args) tensors to a scalar Tensor; each argument is
    perturbed in turn while the others are held at their original values.
    """
    tensors = [ad.parameter(np.asarray(a, dtype=np.float64).copy()) for a in args]
    out = build(*tensors)
    out.backward()
    for k, (t, a) in enumerate(zip(tensors, args)):
        def probe(x, k=k):
            frozen = [ad.Tensor(x if j == k else other.data) for j, other in enumerate(tensors)]
            return float(build(*frozen).data)

        want = numeric_grad(probe, np.asarray(a, dtype=np.float64).copy(), eps=eps)
        got = t.grad if t.grad is not None else np.zeros_like(t.data)
        np.testing.assert_allclose(got, want, atol=atol, rtol=rtol, err_msg=f"arg {k}")


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise relative error with an absolute floor for tiny entries."""
    denom = np.maximum(np.abs(numeric), 1e-4)
    return float(np.max(np.abs(analytic - numeric) / denom))


def fd_check_params(params: dict, forward, eps: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-7):
    """Check every named parameter's backprop gradient against central FD.

    `forward` rebuilds the graph from the live parameter tensors and
    returns a scalar Tensor; parameters are perturbed in place between
    calls.
    """
    for t in params.values():
        t.grad = None
    forward().backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    for name, t in params.items():
        def probe(x, t=t):
            saved = t.data
            t.data = x
            try:
                return float(forward().data)
            finally:
                t.data = saved

        numeric = numeric_grad(probe, t.data.copy(), eps=eps)
        np.testing.assert_allclose(
            analytic[name], numeric, rtol=rtol, atol=atol, err_msg=f"parameter {name}"
        )
