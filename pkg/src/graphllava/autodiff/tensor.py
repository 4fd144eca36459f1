"""Reverse-mode autodiff over numpy arrays.

Each op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. ``backward`` walks
the recorded graph in reverse topological order and accumulates into the
``grad`` of leaf tensors that require gradients.

Broadcasting is deliberately limited to adding a 1-D bias over the last
axis; every other shape disagreement raises :class:`ShapeMismatch`.
"""

from __future__ import annotations

import contextlib
import math
import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import EmptyMask, NonScalarLoss, ShapeMismatch

_state = threading.local()

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


@contextlib.contextmanager
def no_grad():
    """Skip graph recording inside the block (per thread)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f" and dtype is None:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    # -- basic properties
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    # -- operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, scale(as_tensor(other, self.dtype), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _make(data: np.ndarray, parents: Sequence[Tensor], fn, op: str) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every requires_grad leaf."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        lead = tuple(range(a.ndim - 1))
        return _make(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=lead)), "add_bias")
    raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    xd = x.data
    k = xd.dtype.type(_SQRT_2_OVER_PI)
    c = xd.dtype.type(_GELU_C)
    inner = k * (xd + c * xd**3)
    t = np.tanh(inner)
    half = xd.dtype.type(0.5)
    out = half * xd * (1 + t)

    def fn(g):
        d = half * (1 + t) + half * xd * (1 - t * t) * k * (1 + 3 * c * xd * xd)
        return (g * d,)

    return _make(out, (x,), fn, "gelu")


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by a constant (no gradient through them)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[-mask.ndim:]:
        raise ShapeMismatch(f"masked_fill: mask {mask.shape} vs {x.shape}")
    out = np.where(mask, x.data.dtype.type(value), x.data)
    return _make(out, (x,), lambda g: (np.where(mask, 0, g).astype(g.dtype),), "masked_fill")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., m, k] @ b[..., k, n]`` with identical batch dims, or a shared 2-D ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    shared = b.ndim == 2 and a.ndim > 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatch(f"matmul batch dims: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def fn(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if shared:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _make(ad @ bd, (a, b), fn, "matmul")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat of an empty list")
    ref = list(tensors[0].shape)
    ax = axis % len(ref)
    for t in tensors[1:]:
        s = list(t.shape)
        if len(s) != len(ref) or s[:ax] + s[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise ShapeMismatch(f"concat: {tensors[0].shape} vs {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, fn, "concat")


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    src = x.shape
    if axis is None:
        return _make(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, src).copy(),), "sum")
    ax = axis % x.ndim
    return _make(
        x.data.sum(axis=ax),
        (x,),
        lambda g: (np.broadcast_to(np.expand_dims(g, ax), src).copy(),),
        "sum",
    )


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    src = x.shape
    if axis is None:
        n = x.data.size
        return _make(np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, src).copy(),), "mean")
    ax = axis % x.ndim
    n = src[ax]
    return _make(
        x.data.mean(axis=ax),
        (x,),
        lambda g: (np.broadcast_to(np.expand_dims(g / n, ax), src).copy(),),
        "mean",
    )


# ---------------------------------------------------------------- nn primitives


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), fn, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm: x {x.shape}, gain {gain.shape}, bias {bias.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + xd.dtype.type(eps))
    xhat = xc * inv
    gd = gain.data
    lead = tuple(range(x.ndim - 1))

    def fn(g):
        gx_hat = g * gd
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(xhat * gd + bias.data, (x, gain, bias), fn, "layer_norm")


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; output shape is ``ids.shape + (dim,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeMismatch(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding ids outside 0..{table.shape[0] - 1}")
    rows = table.shape

    def fn(g):
        gt = np.zeros(rows, dtype=g.dtype)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, rows[1]))
        return (gt,)

    return _make(table.data[ids], (table,), fn, "embedding")


def log_softmax_np(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def masked_cross_entropy(logits: Tensor, targets, mask) -> Tensor:
    """Mean of ``-log softmax(logits)[t, targets[t]]`` over positions with ``mask[t] == 1``.

    Positions with mask 0 are never read, so their targets cannot influence the value.
    """
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],) or mask.shape != targets.shape:
        raise ShapeMismatch(f"cross-entropy: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}")
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise EmptyMask("cross-entropy mask selects no positions")
    picked = targets[rows]
    lp = log_softmax_np(logits.data[rows])
    n = rows.size
    loss = -lp[np.arange(n), picked].sum() / logits.data.dtype.type(n)

    def fn(g):
        p = np.exp(lp)
        p[np.arange(n), picked] -= 1
        full = np.zeros_like(logits.data)
        full[rows] = p * (g / n)
        return (full,)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), fn, "cross_entropy")
