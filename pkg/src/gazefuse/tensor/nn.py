"""Parameter containers and the few layers every model block shares."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from gazefuse.errors import ShapeError
from gazefuse.tensor.core import Tensor, layer_norm


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def normal_init(rng: np.random.Generator, shape, std: float = 0.02) -> Tensor:
    return parameter(rng.normal(0.0, std, size=shape))


def zeros_init(shape) -> Tensor:
    return parameter(np.zeros(shape))


class Module:
    """Walks attributes to collect trainable tensors under dotted names.

    Buffers are non-trainable arrays that still belong in checkpoints (for
    instance feature standardization statistics).
    """

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{path}.{i}", item
            elif isinstance(value, dict):
                for key in sorted(value):
                    item = value[key]
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{key}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{path}.{key}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {}

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        if buffers:
            raise KeyError(f"unexpected buffers: {sorted(buffers)}")

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for name, buf in self.named_buffers().items():
            state[f"buffers.{name}"] = np.asarray(buf, dtype=np.float64).copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = {k[len("buffers.") :]: v for k, v in state.items() if k.startswith("buffers.")}
        missing = set(params) - set(state)
        unexpected = {k for k in state if not k.startswith("buffers.")} - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} != parameter shape {p.shape}")
            p.data = value.copy()
        self.load_buffers(buffers)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        self._set_mode(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def _set_mode(self, mode: bool) -> None:
        self.training = mode
        for value in vars(self).values():
            children = value if isinstance(value, (list, tuple)) else (value.values() if isinstance(value, dict) else [value])
            for child in children:
                if isinstance(child, Module):
                    child._set_mode(mode)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float = 0.02, bias: bool = True):
        self.weight = normal_init(rng, (d_in, d_out), std)
        self.bias = zeros_init((d_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(d))
        self.bias = zeros_init((d,))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self._eps)
