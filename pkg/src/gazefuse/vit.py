"""Self-attention encoder over temporal patches of a fixation sequence.

A "patch" is a window of ``window`` consecutive fixation rows flattened into
one token, so a ``(T, d)`` sequence becomes ``ceil(T / window)`` tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gazefuse.errors import ConfigError, ShapeError
from gazefuse.tensor import (
    LayerNorm,
    Linear,
    Module,
    Tensor,
    activation,
    as_tensor,
    concat,
    dropout,
    softmax,
    swapaxes,
    zeros_init,
)

MASK_VALUE = -1e9


@dataclass
class ViTConfig:
    window: int = 4
    input_dim: int = 4
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    mlp_ratio: int = 4
    dropout: float = 0.1
    max_patches: int = 64
    activation: str = "gelu"

    def validate(self) -> None:
        if self.window < 1 or self.layers < 1 or self.heads < 1:
            raise ConfigError("window, layers and heads must be at least 1")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by {self.heads} heads")


def patchify(x, window: int) -> Tensor:
    """``(..., T, d)`` -> ``(..., ceil(T/window), window*d)``, zero-padding the tail."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ShapeError(f"patchify needs a (..., T, d) input with T >= 1, got {x.shape}")
    *lead, t, d = x.shape
    n = -(-t // window)
    pad = n * window - t
    if pad:
        x = concat([x, Tensor(np.zeros((*lead, pad, d)))], axis=-2)
    return x.reshape(*lead, n, window * d)


def patch_mask(row_mask: np.ndarray, window: int) -> np.ndarray:
    """A patch is valid when any of its rows is."""
    row_mask = np.asarray(row_mask, dtype=np.float64)
    *lead, t = row_mask.shape
    n = -(-t // window)
    padded = np.zeros((*lead, n * window))
    padded[..., :t] = row_mask
    return (padded.reshape(*lead, n, window).max(axis=-1) > 0).astype(np.float64)


class PatchEmbedding(Module):
    def __init__(self, config: ViTConfig, rng: np.random.Generator):
        self.proj = Linear(config.window * config.input_dim, config.d_model, rng, bias=False)
        self.pos = zeros_init((config.max_patches, config.d_model))

    def __call__(self, patches: Tensor) -> Tensor:
        n = patches.shape[-2]
        if n > self.pos.shape[0]:
            raise ShapeError(f"sequence has {n} patches but the positional table holds {self.pos.shape[0]}")
        return self.proj(patches) + self.pos[:n]


class AttentionBlock(Module):
    """Pre-norm transformer block: multi-head attention then MLP, each residual."""

    def __init__(self, config: ViTConfig, rng: np.random.Generator):
        d = config.d_model
        self.ln1 = LayerNorm(d)
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.o = Linear(d, d, rng)
        self.ln2 = LayerNorm(d)
        self.fc1 = Linear(d, d * config.mlp_ratio, rng)
        self.fc2 = Linear(d * config.mlp_ratio, d, rng)
        self._heads = config.heads
        self._dropout = config.dropout
        self._act = config.activation
        self.last_attention: np.ndarray | None = None

    def _split(self, t: Tensor) -> Tensor:
        b, n, d = t.shape
        return swapaxes(t.reshape(b, n, self._heads, d // self._heads), 1, 2)

    def attend(self, z: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        """Multi-head scaled dot-product attention on a ``(B, N, D)`` batch."""
        b, n, d = z.shape
        dk = d // self._heads
        q, k, v = self._split(self.q(z)), self._split(self.k(z)), self._split(self.v(z))
        scores = (q @ swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dk))
        if key_mask is not None:
            bias = np.where(np.asarray(key_mask)[:, None, None, :] > 0, 0.0, MASK_VALUE)
            scores = scores + Tensor(np.broadcast_to(bias, scores.shape).copy())
        weights = softmax(scores, axis=-1)
        self.last_attention = weights.data
        ctx = swapaxes(weights @ v, 1, 2).reshape(b, n, d)
        return self.o(ctx)

    def __call__(self, z: Tensor, key_mask: np.ndarray | None = None, rng: np.random.Generator | None = None) -> Tensor:
        z = z + dropout(self.attend(self.ln1(z), key_mask), self._dropout, self.training, rng)
        hidden = activation(self._act, self.fc1(self.ln2(z)))
        return z + dropout(self.fc2(hidden), self._dropout, self.training, rng)


class ViTEncoder(Module):
    def __init__(self, config: ViTConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.embed = PatchEmbedding(config, rng)
        self.blocks = [AttentionBlock(config, rng) for _ in range(config.layers)]
        self.ln_final = LayerNorm(config.d_model)

    def __call__(self, x, row_mask: np.ndarray | None = None, rng: np.random.Generator | None = None) -> Tensor:
        """Encode ``(T, d)`` or ``(B, T, d)`` input into ``(…, N, d_model)`` tokens."""
        x = as_tensor(x)
        single = x.ndim == 2
        if single:
            x = x.reshape(1, *x.shape)
            row_mask = None if row_mask is None else np.asarray(row_mask)[None]
        z = self.embed(patchify(x, self.config.window))
        key_mask = None if row_mask is None else patch_mask(row_mask, self.config.window)
        for block in self.blocks:
            z = block(z, key_mask, rng)
        z = self.ln_final(z)
        return z.reshape(*z.shape[1:]) if single else z
