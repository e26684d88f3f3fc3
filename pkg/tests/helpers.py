"""Shared test utilities: the central finite-difference oracle.

The numeric gradient is computed entirely outside the autodiff engine so
every comparison is against an independent path.
"""

from __future__ import annotations

import numpy as np

from prosodiff import engine

FD_STEP = 1e-4
FD_TOL = 1e-4


def numeric_gradient(scalar_fn, array: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar_fn() with respect to ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        f_plus = scalar_fn()
        flat[i] = original - step
        f_minus = scalar_fn()
        flat[i] = original
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def assert_gradients_match(build_loss, arrays: list[np.ndarray], tol: float = FD_TOL) -> None:
    """build_loss(*tensors) must return a scalar Tensor; checks every input's gradient."""
    tensors = [engine.Tensor(a) for a in arrays]
    loss = build_loss(*tensors)
    loss.backward()

    def evaluate() -> float:
        return float(build_loss(*[engine.Tensor(a) for a in arrays]).data)

    for idx, (tensor, array) in enumerate(zip(tensors, arrays)):
        numeric = numeric_gradient(evaluate, array)
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(array)
        scale = np.maximum(1.0, np.maximum(np.abs(numeric), np.abs(analytic)))
        worst = np.max(np.abs(numeric - analytic) / scale)
        assert worst < tol, f"input {idx}: finite-difference mismatch {worst:.3e}"
