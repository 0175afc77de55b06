"""Adam with coupled L2 regularisation, and Kaiming initialisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DomainError, NumericError
from .tensor import Tensor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float, weight_decay: float = 0.0):
    """One bias-corrected Adam update.

    ``weight_decay`` is added to the gradient as ``weight_decay * theta``, the
    gradient of ``weight_decay / 2 * ||theta||^2``. Returns the new parameter
    arrays; ``state`` is updated in place.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DomainError("adam_step: params, grads and state lengths differ")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    new = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DomainError(f"adam_step: gradient shape {g.shape} != parameter shape {p.shape}")
        g = g + weight_decay * p if weight_decay else g
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        update = lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)
        p_new = p - update
        if not np.all(np.isfinite(p_new)):
            raise NumericError("adam_step produced non-finite parameters")
        new.append(p_new)
    return new


class Adam:
    """Stateful wrapper applying :func:`adam_step` to a list of tensors in place."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = AdamState.zeros_like([p.data for p in self.params])

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new = adam_step([p.data for p in self.params], grads, self.state, self.lr, self.weight_decay)
        for p, d in zip(self.params, new):
            p.data = d


def kaiming_init(shape, fan_in: int, rng: np.random.Generator) -> Tensor:
    """He-normal weights: mean 0, standard deviation sqrt(2 / fan_in)."""
    if fan_in < 1:
        raise DomainError("fan_in must be at least 1")
    return Tensor(rng.standard_normal(shape) * np.sqrt(2.0 / fan_in), requires_grad=True)
