"""Multimodal fusion, the sigmoid classifier and the binary cross-entropy loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from gazefuse.errors import ConfigError, UsageError
from gazefuse.tensor import (
    Linear,
    Module,
    Tensor,
    as_tensor,
    clip,
    concat,
    dropout,
    log,
    normal_init,
    sigmoid,
    softmax,
    stack,
    tanh,
    transpose,
    zeros_init,
)

PROB_EPS = 1e-7
STRATEGIES = ("hybrid", "early", "late")


@dataclass(frozen=True)
class FusionExplanation:
    modalities: tuple[str, ...]
    weights: tuple[float, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.modalities, self.weights))


def attention_fusion(features, W, w) -> tuple[Tensor, Tensor]:
    """Softmax-weighted sum of modality vectors.

    ``features`` is ``(..., M, d_f)`` (or a list of ``(d_f,)`` vectors),
    ``W`` is ``(d_a, d_f)`` and ``w`` is ``(d_a,)``. Each modality scores
    ``w . tanh(W f_i)``; the weights are the softmax of the scores over the
    modality axis. Returns ``(fused, weights)``.
    """
    if isinstance(features, (list, tuple)):
        features = stack([as_tensor(f) for f in features], axis=0)
    W, w = as_tensor(W), as_tensor(w)
    if W.ndim != 2 or W.shape[1] != features.shape[-1] or w.shape != (W.shape[0],):
        raise ConfigError(f"fusion parameters W{W.shape}, w{w.shape} do not match modality dim {features.shape[-1]}")
    single = features.ndim == 2
    if single:
        features = features.reshape(1, *features.shape)
    b, m, d = features.shape
    scores = (tanh(features @ transpose(W)) @ w.reshape(-1, 1)).reshape(b, m)
    alpha = softmax(scores, axis=-1)
    fused = (alpha.reshape(b, 1, m) @ features).reshape(b, d)
    if single:
        return fused.reshape(d), alpha.reshape(m)
    return fused, alpha


def early_fusion(features: Sequence[Tensor]) -> Tensor:
    """Concatenate modality vectors in the declared order."""
    if not features:
        raise ConfigError("need at least one modality")
    return concat([as_tensor(f) for f in features], axis=-1)


def late_fusion(probs) -> Tensor:
    """Unweighted mean of per-modality probabilities over the last axis."""
    probs = as_tensor(probs)
    if np.any(probs.data < 0) or np.any(probs.data > 1):
        raise UsageError("late fusion inputs must be probabilities in [0, 1]")
    return probs.mean(axis=-1)


def classify(fused: Tensor, W_c, b_c, eps: float = PROB_EPS) -> tuple[Tensor, Tensor]:
    """Linear logit and its sigmoid, clamped to ``[eps, 1 - eps]``. Returns ``(prob, logit)``."""
    fused, W_c, b_c = as_tensor(fused), as_tensor(W_c), as_tensor(b_c)
    single = fused.ndim == 1
    x = fused.reshape(1, -1) if single else fused
    logit = (x @ W_c.reshape(-1, 1) + b_c.reshape(1)).reshape(x.shape[0])
    prob = clip(sigmoid(logit), eps, 1.0 - eps)
    if single:
        return prob.reshape(()), logit.reshape(())
    return prob, logit


def bce_loss(prob: Tensor, y) -> Tensor:
    """Mean binary cross-entropy of clamped probabilities against 0/1 labels."""
    prob = as_tensor(prob)
    y = np.asarray(y, dtype=np.float64).reshape(prob.shape)
    if np.any(prob.data <= 0) or np.any(prob.data >= 1):
        raise UsageError("bce_loss expects probabilities strictly inside (0, 1); clamp first")
    terms = log(prob) * Tensor(y) + log(1.0 - prob) * Tensor(1.0 - y)
    return -terms.mean()


class FusionHead(Module):
    """Projects each modality to a common width, fuses, and classifies.

    ``strategy`` selects attention-weighted fusion (``hybrid``), feature
    concatenation (``early``) or averaging per-modality probabilities
    (``late``).
    """

    def __init__(self, modality_dims: Mapping[str, int], d_fusion: int = 64, d_attn: int = 32,
                 strategy: str = "hybrid", rng: np.random.Generator | None = None, dropout_rate: float = 0.0):
        if strategy not in STRATEGIES:
            raise ConfigError(f"fusion strategy must be one of {STRATEGIES}, got {strategy!r}")
        if not modality_dims:
            raise ConfigError("need at least one modality")
        rng = rng if rng is not None else np.random.default_rng(0)
        self._names = tuple(modality_dims)
        self._strategy = strategy
        self._dropout = dropout_rate
        self.proj = [Linear(modality_dims[name], d_fusion, rng) for name in self._names]
        if strategy == "hybrid":
            self.W = normal_init(rng, (d_attn, d_fusion), 0.1)
            self.w = normal_init(rng, (d_attn,), 0.1)
            self.W_c = normal_init(rng, (d_fusion,))
            self.b_c = zeros_init((1,))
        elif strategy == "early":
            self.W_c = normal_init(rng, (d_fusion * len(self._names),))
            self.b_c = zeros_init((1,))
        else:
            self.W_c = [normal_init(rng, (d_fusion,)) for _ in self._names]
            self.b_c = [zeros_init((1,)) for _ in self._names]

    @property
    def modality_names(self) -> tuple[str, ...]:
        return self._names

    @property
    def strategy(self) -> str:
        return self._strategy

    def __call__(self, inputs: Mapping[str, Tensor], rng: np.random.Generator | None = None) -> dict:
        """Returns ``prob`` (B,), ``logit`` (B,) or None for late fusion, ``alpha`` (B, M) or None."""
        missing = [n for n in self._names if n not in inputs]
        if missing:
            raise ConfigError(f"missing modality inputs: {missing}")
        projected = [p(as_tensor(inputs[n])) for p, n in zip(self.proj, self._names)]
        if self._strategy == "hybrid":
            fused, alpha = attention_fusion(stack(projected, axis=-2), self.W, self.w)
            fused = dropout(fused, self._dropout, self.training, rng)
            prob, logit = classify(fused, self.W_c, self.b_c)
            return {"prob": prob, "logit": logit, "alpha": alpha.data}
        if self._strategy == "early":
            fused = dropout(early_fusion(projected), self._dropout, self.training, rng)
            prob, logit = classify(fused, self.W_c, self.b_c)
            return {"prob": prob, "logit": logit, "alpha": None}
        probs = []
        for f, W_c, b_c in zip(projected, self.W_c, self.b_c):
            p, _ = classify(dropout(f, self._dropout, self.training, rng), W_c, b_c)
            probs.append(p.reshape(-1, 1))
        return {"prob": late_fusion(concat(probs, axis=-1)), "logit": None, "alpha": None}
