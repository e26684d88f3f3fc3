"""Adaptive-moment (Adam) parameter updates."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .engine import Parameter


def optimizer_step(
    params: Iterable[Parameter],
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> None:
    """Apply one Adam update to every parameter, then clear gradients.

    Moments live on the Parameter itself (flat, row-major). Raises if any
    parameter is missing its gradient; a partial update would silently
    desynchronise the moment estimates.
    """
    params = list(params)
    missing = [p.name for p in params if p.grad is None]
    if missing:
        raise ValueError(f"missing gradients for: {', '.join(missing)}")

    for p in params:
        g = p.grad.reshape(-1)
        p.step_counter += 1
        t = p.step_counter
        p.first_moment = beta1 * p.first_moment + (1.0 - beta1) * g
        p.second_moment = beta2 * p.second_moment + (1.0 - beta2) * (g * g)
        m_hat = p.first_moment / (1.0 - beta1**t)
        v_hat = p.second_moment / (1.0 - beta2**t)
        update = learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)
        p.data = p.data - update.reshape(p.tensor.shape)
        p.zero_grad()


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def grad_global_norm(params: Iterable[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)
