"""Diagonal linear state-space layer and its two scan kernels.

Per channel ``c`` with a ``d_state``-dimensional hidden state::

    h_t = a * h_{t-1} + b * x_t        (elementwise over the state axis)
    y_t = <c, h_t> + d * x_t

with ``h_{-1} = 0``. ``a``, ``b``, ``c`` have shape ``(channels, d_state)`` and
``d`` has shape ``(channels,)``. The parameters do not depend on the input, so
the recurrence is linear and time-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gazefuse.errors import NumericalError, ShapeError
from gazefuse.tensor import Linear, Module, Tensor, dropout, parameter, sigmoid, silu


@dataclass
class SSMParams:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.a, self.b, self.c = (np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (self.a, self.b, self.c))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=np.float64))
        if not (self.a.shape == self.b.shape == self.c.shape) or self.d.shape != self.a.shape[:1]:
            raise ShapeError(f"inconsistent SSM parameter shapes a{self.a.shape} b{self.b.shape} c{self.c.shape} d{self.d.shape}")

    @property
    def channels(self) -> int:
        return self.a.shape[0]


@dataclass
class ScanStats:
    """Instrumentation for scan kernels: dependent rounds and combine count."""

    depth: int = 0
    combines: int = 0
    levels: list[int] = field(default_factory=list)


def _check_finite(h: np.ndarray, time_axis: int) -> None:
    if np.all(np.isfinite(h)):
        return
    bad = np.moveaxis(~np.isfinite(h), time_axis, 0).reshape(h.shape[time_axis], -1).any(axis=1)
    raise NumericalError(f"state-space scan overflowed at step {int(np.argmax(bad))}")


def recurrence_sequential(a: np.ndarray, u: np.ndarray, stats: ScanStats | None = None) -> np.ndarray:
    """h_t = a * h_{t-1} + u_t along axis -3 of ``u`` (shape ``(..., N, C, S)``)."""
    n = u.shape[-3]
    h = np.empty_like(u)
    prev = np.zeros(u.shape[:-3] + u.shape[-2:])
    for t in range(n):
        prev = a * prev + u[..., t, :, :]
        h[..., t, :, :] = prev
    if stats is not None:
        stats.depth += n
        stats.combines += n
    _check_finite(h, h.ndim - 3)
    return h


def recurrence_parallel(a: np.ndarray, u: np.ndarray, stats: ScanStats | None = None) -> np.ndarray:
    """Same recurrence via an inclusive Hillis-Steele scan.

    Elements are affine maps ``h -> A h + U``; composing ``(A1, U1)`` then
    ``(A2, U2)`` gives ``(A1 A2, A2 U1 + U2)``, which is associative. Each
    round combines every position with the one ``offset`` steps earlier, so
    ``ceil(log2 N)`` dependent rounds suffice.
    """
    n = u.shape[-3]
    U = u.copy()
    A = np.broadcast_to(a, u.shape).copy()
    offset = 1
    while offset < n:
        U_new = U.copy()
        A_new = A.copy()
        U_new[..., offset:, :, :] = A[..., offset:, :, :] * U[..., :-offset, :, :] + U[..., offset:, :, :]
        A_new[..., offset:, :, :] = A[..., offset:, :, :] * A[..., :-offset, :, :]
        U, A = U_new, A_new
        if stats is not None:
            stats.depth += 1
            stats.combines += n - offset
            stats.levels.append(n - offset)
        offset *= 2
    _check_finite(U, U.ndim - 3)
    return U


KERNELS = {"sequential": recurrence_sequential, "parallel": recurrence_parallel}


def _run(params: SSMParams, x: np.ndarray, kernel, stats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[-1] != params.channels:
        raise ShapeError(f"input has {x.shape[-1]} channels, parameters have {params.channels}")
    h = kernel(params.a, params.b * x[..., None], stats)
    return (h * params.c).sum(axis=-1) + params.d * x


def ssm_scan(params: SSMParams, x: np.ndarray, stats: ScanStats | None = None) -> np.ndarray:
    """Sequential evaluation of the recurrence. ``x`` is ``(..., N, channels)``."""
    return _run(params, x, recurrence_sequential, stats)


def ssm_scan_parallel(params: SSMParams, x: np.ndarray, stats: ScanStats | None = None) -> np.ndarray:
    """Prefix-scan evaluation; agrees with :func:`ssm_scan` up to rounding."""
    return _run(params, x, recurrence_parallel, stats)


def scan_op(x: Tensor, a: Tensor, b: Tensor, c: Tensor, d: Tensor, method: str = "sequential") -> Tensor:
    """Differentiable scan over axis -2 of ``x`` (shape ``(..., N, channels)``).

    The backward pass runs the adjoint recurrence in reverse time:
    ``g_t = c * dy_t + a * g_{t+1}``.
    """
    kernel = KERNELS[method]
    xv, av, bv, cv, dv = x.data, a.data, b.data, c.data, d.data
    h = kernel(av, bv * xv[..., None])
    y = (h * cv).sum(axis=-1) + dv * xv

    def _back(gy):
        lead = tuple(range(gy.ndim - 1))
        src = gy[..., None] * cv
        g = np.flip(kernel(av, np.flip(src, axis=-3)), axis=-3)
        h_prev = np.zeros_like(h)
        h_prev[..., 1:, :, :] = h[..., :-1, :, :]
        gx = (g * bv).sum(axis=-1) + gy * dv
        ga = (g * h_prev).sum(axis=lead)
        gb = (g * xv[..., None]).sum(axis=lead)
        gc = (gy[..., None] * h).sum(axis=lead)
        gd = (gy * xv).sum(axis=lead)
        return gx, ga, gb, gc, gd

    return Tensor.from_op(y, (x, a, b, c, d), _back, "ssm_scan")


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


class SSMBlock(Module):
    """Input projection, SiLU gate, state-space scan, output projection, residual."""

    def __init__(self, d_model: int, d_state: int, rng: np.random.Generator, dropout_rate: float = 0.0, method: str = "sequential"):
        self.in_proj = Linear(d_model, d_model, rng)
        # decay in (0.5, 0.95) at init; the sigmoid keeps it in (0, 1) during training
        self.a_raw = parameter(_logit(rng.uniform(0.5, 0.95, size=(d_model, d_state))))
        self.b = parameter(rng.normal(0.0, 1.0 / np.sqrt(d_state), size=(d_model, d_state)))
        self.c = parameter(rng.normal(0.0, 1.0 / np.sqrt(d_state), size=(d_model, d_state)))
        self.d = parameter(np.ones(d_model))
        self.out_proj = Linear(d_model, d_model, rng)
        self._dropout = dropout_rate
        self._method = method

    def params(self) -> SSMParams:
        return SSMParams(1.0 / (1.0 + np.exp(-self.a_raw.data)), self.b.data, self.c.data, self.d.data)

    def __call__(self, h: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        u = silu(self.in_proj(h))
        y = scan_op(u, sigmoid(self.a_raw), self.b, self.c, self.d, self._method)
        return h + dropout(self.out_proj(y), self._dropout, self.training, rng)


class TemporalEncoder(Module):
    def __init__(self, d_model: int, d_state: int = 8, n_blocks: int = 2, rng: np.random.Generator | None = None,
                 dropout_rate: float = 0.0, method: str = "sequential"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.blocks = [SSMBlock(d_model, d_state, rng, dropout_rate, method) for _ in range(n_blocks)]

    def __call__(self, h: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        for block in self.blocks:
            h = block(h, rng)
        return h


def pool(h: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Mean over the token axis (-2), restricted to tokens where ``mask`` is 1."""
    if mask is None:
        return h.mean(axis=-2)
    m = np.asarray(mask, dtype=np.float64)
    counts = m.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ShapeError("pooling mask selects no tokens for some sequence")
    weights = Tensor((m / counts)[..., None, :])
    return (weights @ h).reshape(h.shape[:-2] + (h.shape[-1],))
