"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy float array plus an optional gradient slot. Ops build a
graph of parent links and VJP closures; ``backward()`` on a scalar output walks
the graph once in reverse topological order and accumulates gradients into
every tracked leaf. Two precision modes exist: training work runs in float32,
verification (gradient checking, frozen-value tests) in float64.

Only the operations the model needs are provided; reshape/permute and friends
are metadata-plus-copy ops with defined gradients, and broadcasting is limited
to what the forward pass uses (trailing-axis alignment, size-1 expansion).
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ContractError, DimensionError, InputError

_ALLOWED_DTYPES = (np.float32, np.float64)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class PrecisionMode(Enum):
    """Numeric regime: float32 for training, float64 for verification."""

    TRAINING = "training"
    VERIFICATION = "verification"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is PrecisionMode.TRAINING else np.float64)


class Tensor:
    """A dense n-d float array with optional gradient tracking.

    ``data`` is immutable by convention once the tensor has entered a graph;
    the two sanctioned mutations are gradient accumulation (``grad``) and
    in-place parameter updates between training steps.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None

    # ---- introspection ----

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _non_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag})"

    # ---- graph ----

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every tracked leaf's ``grad``.

        ``self`` must hold a single element. Each graph node is visited exactly
        once; fan-out sums naturally because children add into parent slots.
        """
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar output, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(parent) not in seen:
                    stack.append((parent, False))
        if self.grad is None:
            self.grad = np.ones_like(self.data)
        else:
            self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, pgrad in zip(node._parents, node._vjp(node.grad)):
                if pgrad is None or not parent.requires_grad:
                    continue
                parent.grad = pgrad if parent.grad is None else parent.grad + pgrad

    # ---- operator sugar ----

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None) -> "Tensor":
        return mean(self, axis=axis)


def _non_scalar(t: Tensor):
    raise ContractError(f"item() requires a single-element tensor, got shape {t.shape}")


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---- arithmetic ----


def add(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _wrap(a, b.dtype)
    b = _wrap(b, a.dtype)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), vjp)


def sub(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _wrap(a, b.dtype)
    b = _wrap(b, a.dtype)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(data, (a, b), vjp)


def mul(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _wrap(a, b.dtype)
    b = _wrap(b, a.dtype)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, batched over leading axes with numpy semantics.

    Both operands must be at least 2-d; the contraction pairs a's last axis
    with b's second-to-last. Gradients sum over broadcast batch axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul requires 2-d or higher operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        if b.data.ndim == 2:
            ga = g @ b.data.T
            if a.data.ndim > 2:
                a2 = a.data.reshape(-1, a.data.shape[-1])
                g2 = g.reshape(-1, g.shape[-1])
                gb = a2.T @ g2
            else:
                gb = a.data.T @ g
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            ga = _unbroadcast(ga, a.data.shape)
            gb = _unbroadcast(gb, b.data.shape)
        return ga, gb

    return _make(data, (a, b), vjp)


# ---- shape ops (metadata + copy, gradients defined) ----


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.data.shape
    data = np.reshape(a.data, shape)
    return _make(data, (a,), lambda g: (np.reshape(g, orig),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.ascontiguousarray(np.transpose(a.data, axes))
    return _make(data, (a,), lambda g: (np.ascontiguousarray(np.transpose(g, inverse)),))


def getitem(a: Tensor, key) -> Tensor:
    """Basic indexing (ints, slices, ellipsis). Gradient scatters into zeros."""
    data = a.data[key]
    data = data.copy() if isinstance(data, np.ndarray) else np.asarray(data)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[key] += g
        return (full,)

    return _make(data, (a,), vjp)


def take(a: Tensor, indices, axis: int) -> Tensor:
    """Select ``indices`` along ``axis`` (integer-array indexing, repeats allowed)."""
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(a.data, idx, axis=axis)

    def vjp(g):
        full = np.zeros_like(a.data)
        sel = [slice(None)] * a.data.ndim
        sel[axis] = idx
        np.add.at(full, tuple(sel), g)
        return (full,)

    return _make(data, (a,), vjp)


def pick(a: Tensor, index) -> Tensor:
    """Pick one element per row: (C,) with int -> scalar, (B,C) with (B,) -> (B,)."""
    if a.ndim == 1:
        i = int(index)
        data = np.asarray(a.data[i])

        def vjp(g):
            full = np.zeros_like(a.data)
            full[i] = g
            return (full,)

        return _make(data, (a,), vjp)
    if a.ndim == 2:
        idx = np.asarray(index, dtype=np.intp)
        rows = np.arange(a.shape[0])
        data = a.data[rows, idx].copy()

        def vjp(g):
            full = np.zeros_like(a.data)
            np.add.at(full, (rows, idx), g)
            return (full,)

        return _make(data, (a,), vjp)
    raise DimensionError(f"pick expects a 1-d or 2-d tensor, got shape {a.shape}")


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    parts = tuple(tensors)
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return _make(data, parts, vjp)


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Broadcast to ``shape`` (copying); gradient sums the broadcast axes."""
    shape = tuple(shape)
    data = np.ascontiguousarray(np.broadcast_to(a.data, shape))
    return _make(data, (a,), lambda g: (_unbroadcast(g, a.data.shape),))


# ---- reductions ----


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(np.asarray(data), (a,), vjp)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis), 1.0 / n)


# ---- pointwise nonlinearities ----


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return _make(data, (a,), lambda g: (g * data,))


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)
    return _make(data, (a,), lambda g: (g / a.data,))


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit x * Phi(x) (no tanh approximation)."""
    x = a.data
    cdf = np.asarray(ndtr(x), dtype=x.dtype)
    data = x * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x * x, dtype=x.dtype) * x.dtype.type(_INV_SQRT_2PI)
        return (g * (cdf + x * pdf),)

    return _make(data, (a,), vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis`` (max is subtracted before exponentiation)."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return _make(data, (a,), vjp)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse

    def vjp(g):
        return (g - np.exp(data) * g.sum(axis=axis, keepdims=True),)

    return _make(data, (a,), vjp)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit (biased) variance, then scale-shift.

    ``gamma`` and ``beta`` are 1-d of length d = a.shape[-1].
    """
    if eps <= 0.0:
        raise InputError(f"layer_norm eps must be positive, got {eps}")
    d = a.shape[-1] if a.ndim else 0
    if gamma.ndim != 1 or beta.ndim != 1 or gamma.shape[0] != d or beta.shape[0] != d:
        raise DimensionError(
            f"layer_norm scale/shift must be 1-d of length {d}, got {gamma.shape} and {beta.shape}"
        )
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    data = gamma.data * xhat + beta.data

    def vjp(g):
        reduce_axes = tuple(range(g.ndim - 1))
        gxhat = g * gamma.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        ggamma = (g * xhat).sum(axis=reduce_axes)
        gbeta = g.sum(axis=reduce_axes)
        return gx, ggamma, gbeta

    return _make(data, (a, gamma, beta), vjp)


# ---- window extraction (the convolutional stem is built on this + matmul) ----


def extract_patches(a: Tensor, size: int, stride: int, pad: int = 0) -> Tensor:
    """Slide a size x size window over (N, H, W, C) input.

    Returns (N, Ho, Wo, size*size*C); overlapping windows accumulate gradient.
    """
    if a.ndim != 4:
        raise DimensionError(f"extract_patches expects (N, H, W, C), got shape {a.shape}")
    n, h, w, c = a.shape
    x = a.data
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    hp, wp = h + 2 * pad, w + 2 * pad
    ho = (hp - size) // stride + 1
    wo = (wp - size) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"window {size}x{size} stride {stride} does not fit {h}x{w} input")
    windows = np.empty((n, ho, wo, size, size, c), dtype=x.dtype)
    for i in range(size):
        for j in range(size):
            windows[:, :, :, i, j, :] = x[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :]
    data = windows.reshape(n, ho, wo, size * size * c)

    def vjp(g):
        g6 = g.reshape(n, ho, wo, size, size, c)
        full = np.zeros((n, hp, wp, c), dtype=x.dtype)
        for i in range(size):
            for j in range(size):
                full[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :] += g6[:, :, :, i, j, :]
        if pad:
            full = full[:, pad : pad + h, pad : pad + w, :]
        return (np.ascontiguousarray(full),)

    return _make(data, (a,), vjp)
