"""First-order optimizers over lists of parameter tensors.

State lives in plain dataclasses; the step functions mutate parameter
values in place and return the list for chaining.  Shapes are validated on
every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


@dataclass
class SgdState:
    learning_rate: float
    step: int = 0


def _check_grads(params: list[Tensor], grads: list[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.data.shape != np.shape(g):
            raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {p.data.shape}")


def adam_step(state: AdamState, params: list[Tensor], grads: list[np.ndarray]) -> list[Tensor]:
    """One Adam update with bias correction."""
    _check_grads(params, grads)
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def sgd_step(state: SgdState, params: list[Tensor], grads: list[np.ndarray]) -> list[Tensor]:
    """Plain gradient descent: theta <- theta - lr * g."""
    _check_grads(params, grads)
    state.step += 1
    for p, g in zip(params, grads):
        p.data = p.data - state.learning_rate * np.asarray(g, dtype=np.float64)
    return params
