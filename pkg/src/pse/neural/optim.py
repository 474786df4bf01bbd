"""Adaptive moment estimation with the usual bias correction.

Update per tensor: m <- 0.9 m + 0.1 g; v <- 0.999 v + 0.001 g^2;
theta <- theta - lr * m_hat / (sqrt(v_hat) + 1e-8), epsilon outside the
square root. Deterministic: tensors update in their canonical order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


class NonFiniteGradientError(RuntimeError):
    """Training aborts when a gradient or updated parameter leaves float range."""


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(
    params: ModelParams, grads: dict, state: AdamState, lr: float
) -> tuple[ModelParams, AdamState]:
    """One in-place adaptive-moment update; returns the mutated pair."""
    state.step += 1
    t = state.step
    bias1 = 1.0 - BETA1**t
    bias2 = 1.0 - BETA2**t
    for name, theta in params.tensors.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        if g.shape != theta.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {name} at step {t}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        theta -= lr * (m / bias1) / (np.sqrt(v / bias2) + EPSILON)
        if not np.all(np.isfinite(theta)):
            raise NonFiniteGradientError(f"non-finite parameter {name} after step {t}")
    return params, state
