"""Shared test oracles: central finite differences and relative-error reduction."""

import numpy as np

from amcbench.autodiff import Tensor


def numeric_grad(f, arr, h=1e-5):
    """Central-difference gradient of scalar-valued f() w.r.t. arr, mutated in place."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(analytic, numeric, floor=1e-8):
    """Max relative error over entries where |analytic| + |numeric| > floor."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    mask = (np.abs(a) + np.abs(n)) > floor
    if not mask.any():
        return 0.0
    denom = np.maximum(np.abs(a[mask]), np.abs(n[mask]))
    return float(np.max(np.abs(a[mask] - n[mask]) / denom))


def check_grads(build, arrays, tol=1e-5, h=1e-5):
    """Compare backward() grads of build(tensors) against finite differences.

    `build` maps a list of Tensors to a scalar Tensor and must be a pure
    function of the tensor values (fixed seeds inside). Returns the worst
    relative error seen across all inputs.
    """
    tensors = [Tensor(a.copy()) for a in arrays]
    loss = build(tensors)
    for t in tensors:
        t.zero_grad()
    loss.backward()
    analytic = [t.grad.copy() for t in tensors]

    worst = 0.0
    for i in range(len(arrays)):
        work = [a.copy() for a in arrays]

        def f():
            return float(build([Tensor(a) for a in work]).data)

        num = numeric_grad(f, work[i], h=h)
        err = max_rel_error(analytic[i], num)
        assert err < tol, f"input {i}: rel error {err:.3e} >= {tol}"
        worst = max(worst, err)
    return worst


def spread_from_zero(arr, margin=0.05, shift=0.1):
    """Nudge entries away from 0 so ReLU-family kinks cannot corrupt the check."""
    out = arr.copy()
    out[np.abs(out) < margin] += shift
    return out
