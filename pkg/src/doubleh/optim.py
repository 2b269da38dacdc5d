"""Adam optimizer over lists of parameter tensors."""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .tensor import Tensor


class AdamState:
    """First/second moment estimates per parameter plus the shared step count."""

    def __init__(self):
        self.t = 0
        self.m: dict[Tensor, np.ndarray] = {}
        self.v: dict[Tensor, np.ndarray] = {}


def adam_step(
    params: list[Tensor],
    grads: dict,
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update; parameters are rebound in place.

    Parameters missing from ``grads`` are treated as zero-gradient.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p in params:
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        m = state.m.get(p)
        v = state.v.get(p)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[p] = m
        state.v[p] = v
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_data = p.data - update
        if not np.all(np.isfinite(new_data)):
            raise NumericError("Adam update produced non-finite parameter values")
        p.data = new_data
    return state
