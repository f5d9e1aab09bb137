"""Adam and SGD with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gazefuse.errors import ConfigError, UsageError
from gazefuse.tensor.core import Tensor


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    momentum: float = 0.9
    weight_decay: float = 1e-4
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list, repr=False)
    second_moment: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.kind!r}")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be nonnegative")


def optimizer_step(state: OptimizerState, params: Sequence[Tensor]) -> None:
    """Apply one update in place using each parameter's ``.grad``.

    Decay is decoupled: ``lr * weight_decay * param`` (taken before the
    update) is subtracted after the adaptive or momentum step.
    """
    for i, p in enumerate(params):
        if p.grad is None:
            raise UsageError(f"parameter {i} with shape {p.shape} has no gradient")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        if state.kind == "adam":
            state.second_moment = [np.zeros_like(p.data) for p in params]
    state.step_count += 1
    lr, wd = state.learning_rate, state.weight_decay
    for i, p in enumerate(params):
        g = p.grad
        before = p.data
        if state.kind == "adam":
            m = state.first_moment[i] = state.beta1 * state.first_moment[i] + (1 - state.beta1) * g
            v = state.second_moment[i] = state.beta2 * state.second_moment[i] + (1 - state.beta2) * g * g
            m_hat = m / (1 - state.beta1**state.step_count)
            v_hat = v / (1 - state.beta2**state.step_count)
            update = lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        else:
            buf = state.first_moment[i] = state.momentum * state.first_moment[i] + g
            update = lr * buf
        p.data = before - update - lr * wd * before


class Optimizer:
    """Binds an :class:`OptimizerState` to a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], state: OptimizerState):
        self.params = list(params)
        self.state = state

    def step(self) -> None:
        optimizer_step(self.state, self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def make_optimizer(params: Sequence[Tensor], kind: str = "adam", lr: float = 1e-3, weight_decay: float = 1e-4, **kwargs) -> Optimizer:
    return Optimizer(params, OptimizerState(kind=kind, learning_rate=lr, weight_decay=weight_decay, **kwargs))
