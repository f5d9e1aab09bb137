"""Dense float64 tensors with define-by-run reverse-mode differentiation."""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from gazefuse.errors import ConfigError, NumericalError, ShapeError, UsageError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """An n-dimensional float64 array that can take part in a gradient graph.

    Leaf tensors created with ``requires_grad=True`` receive ``.grad`` when
    :meth:`backward` is called on a scalar that depends on them. Intermediate
    results only hold the closure needed to push gradients to their inputs and
    are released once the backward pass has run.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericalError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
        op: str,
    ) -> "Tensor":
        """Wrap the result of an operation and record how to differentiate it.

        ``backward`` maps the upstream gradient to one gradient per parent
        (``None`` for parents that need none).
        """
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"non-finite values produced by {op}")
        out.data = data
        out.grad = None
        out.op = op
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = tuple(parents) if needs else ()
        out._backward = backward if needs else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self.shape)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op})"

    def backward(self) -> None:
        backward(self)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("division is only supported by Python scalars")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)


def _not_scalar(shape):
    raise UsageError(f"item() needs a single-element tensor, got shape {shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def graph_nodes(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in topological order (inputs first)."""
    return _topological(root)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    The graph is released afterwards; calling backward twice on the same loss
    is a usage error.
    """
    if loss.data.size != 1 or loss.ndim > 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor that requires grad")
    if loss._backward is None and loss._parents == () and loss.op != "leaf":
        raise UsageError("graph already consumed by a previous backward()")
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if not np.all(np.isfinite(g)):
                raise NumericalError("non-finite gradient reached a leaf tensor")
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node._backward = None
        node._parents = ()


# ---------------------------------------------------------------------------
# broadcasting helpers


def _suffix_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    big, small = (a, b) if a.ndim >= b.ndim else (b, a)
    if big.shape[big.ndim - small.ndim :] != small.shape:
        raise ShapeError(
            f"shapes {a.shape} and {b.shape} are not compatible; only leading-dimension broadcast is supported"
        )


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


def _scalar_or_tensor(x) -> tuple[Tensor | None, float | None]:
    if isinstance(x, Tensor):
        return x, None
    if isinstance(x, (int, float, np.floating, np.integer)):
        return None, float(x)
    return Tensor(x), None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    ta, sa = _scalar_or_tensor(a)
    tb, sb = _scalar_or_tensor(b)
    if ta is None and tb is None:
        return Tensor(sa + sb)
    if ta is None or tb is None:
        t, s = (tb, sa) if ta is None else (ta, sb)
        return Tensor.from_op(t.data + s, (t,), lambda g: (g,), "add_scalar")
    _suffix_broadcast(ta.data, tb.data)
    sha, shb = ta.shape, tb.shape
    return Tensor.from_op(
        ta.data + tb.data, (ta, tb), lambda g: (_reduce_to(g, sha), _reduce_to(g, shb)), "add"
    )


def sub(a, b) -> Tensor:
    tb, sb = _scalar_or_tensor(b)
    return add(a, -sb if tb is None else mul(tb, -1.0))


def mul(a, b) -> Tensor:
    ta, sa = _scalar_or_tensor(a)
    tb, sb = _scalar_or_tensor(b)
    if ta is None and tb is None:
        return Tensor(sa * sb)
    if ta is None or tb is None:
        t, s = (tb, sa) if ta is None else (ta, sb)
        return Tensor.from_op(t.data * s, (t,), lambda g: (g * s,), "mul_scalar")
    _suffix_broadcast(ta.data, tb.data)
    av, bv = ta.data, tb.data

    def _back(g):
        return _reduce_to(g * bv, av.shape), _reduce_to(g * av, bv.shape)

    return Tensor.from_op(av * bv, (ta, tb), _back, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either a 2-D weight applied to the last axis of ``a`` or a batch
    of matrices with exactly the same leading dimensions as ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    if b.ndim == 2:
        k, m = bv.shape

        def _back(g):
            ga = g @ bv.T
            gb = av.reshape(-1, k).T @ g.reshape(-1, m)
            return ga, gb

        return Tensor.from_op(av @ bv, (a, b), _back, "matmul")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"batched matmul leading dimensions differ: {a.shape} @ {b.shape}")

    def _bback(g):
        return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return Tensor.from_op(av @ bv, (a, b), _bback, "bmm")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x: Tensor, shape) -> Tensor:
    original = x.shape
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor.from_op(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, axes)


def take(x: Tensor, index) -> Tensor:
    """Basic (slice / integer) indexing; no repeated positions."""
    shape = x.shape

    def _back(g):
        full = np.zeros(shape)
        full[index] += g
        return (full,)

    return Tensor.from_op(x.data[index], (x,), _back, "take")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _back(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))]

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, _back, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def _back(g):
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return Tensor.from_op(np.stack([t.data for t in tensors], axis=axis), tensors, _back, "stack")


# ---------------------------------------------------------------------------
# reductions


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def _back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor.from_op(x.data.sum(axis=axis, keepdims=keepdims), (x,), _back, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# nonlinearities


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericalError("log of a nonpositive value")
    xv = x.data
    return Tensor.from_op(np.log(xv), (x,), lambda g: (g / xv,), "log")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    xv = x.data
    return Tensor.from_op(np.maximum(xv, 0.0), (x,), lambda g: (g * (xv > 0),), "relu")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    xv = x.data
    inner = _GELU_C * (xv + 0.044715 * xv**3)
    th = np.tanh(inner)
    out = 0.5 * xv * (1.0 + th)

    def _back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xv**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th * th) * dinner),)

    return Tensor.from_op(out, (x,), _back, "gelu")


def silu(x: Tensor) -> Tensor:
    xv = x.data
    s = _stable_sigmoid(xv)
    return Tensor.from_op(xv * s, (x,), lambda g: (g * (s + xv * s * (1.0 - s)),), "silu")


_ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "gelu": gelu, "silu": silu}


def activation(kind: str, x: Tensor) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(x)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    xv = x.data
    inside = (xv >= lo) & (xv <= hi)
    return Tensor.from_op(np.clip(xv, lo, hi), (x,), lambda g: (g * inside,), "clip")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), _back, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    xv = x.data
    d = xv.shape[-1]
    mu = xv.mean(axis=-1, keepdims=True)
    centered = xv - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gv = gain.data

    def _back(g):
        gxhat = g * gv
        gx = inv / d * (d * gxhat - gxhat.sum(axis=-1, keepdims=True) - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True))
        ggain = _reduce_to(g * xhat, gain.shape)
        gbias = _reduce_to(g, bias.shape)
        return gx, ggain, gbias

    return Tensor.from_op(xhat * gv + bias.data, (x, gain, bias), _back, "layer_norm")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in training mode needs an explicit rng stream")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor.from_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def parameters_finite(params: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(p.data)) for p in params)
