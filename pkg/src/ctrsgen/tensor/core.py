"""Dense tensors with reverse-mode gradients.

Every operation computes its value eagerly with numpy and, when any input
tracks gradients, records a backward closure on the output.  ``backward``
walks the recorded graph once in reverse topological order.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

from . import kernels

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an operation."""


@contextlib.contextmanager
def no_grad():
    """Evaluate operations without recording a graph."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.array(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def astype(self, dtype) -> "Tensor":
        """Fresh leaf with converted data, keeping the gradient flag."""
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, dtype=dtype, name=self.name)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    tracked = grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = tracked
    out._parents = tuple(parents) if tracked else ()
    out._backward = backward_fn if tracked else None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise and linear algebra

def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    def bw(g):
        return (g * s,)

    return _make(a.data * a.dtype.type(s), (a,), bw, "scalar_scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D and 2-D operands (numpy ``@`` semantics)."""
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D operands supported, got {a.shape} and {b.shape}")
    ka = a.shape[-1]
    kb = b.shape[0]
    if ka != kb:
        raise ShapeError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        if ad.ndim == 1:
            return bd @ g, np.outer(ad, g)
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g @ bd.T, ad.T @ g

    return _make(out, (a, b), bw, "matmul")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), bw, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), bw, "sigmoid")


def log(a: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log of ``max(a, floor)``; no gradient flows where clamped."""
    x = a.data
    clamped = np.maximum(x, x.dtype.type(floor)) if floor > 0 else x
    out = np.log(clamped)

    def bw(g):
        d = g / clamped
        if floor > 0:
            d = np.where(x >= floor, d, 0.0)
        return (d,)

    return _make(out, (a,), bw, "log")


def tsum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), bw, "sum")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(out, tensors, bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from None

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(out, tensors, bw, "stack")


def index(a: Tensor, idx) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate."""
    out = a.data[idx]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out, dtype=a.dtype)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(out, (a,), bw, "index")


def reshape(a: Tensor, shape) -> Tensor:
    def bw(g):
        return (g.reshape(a.shape),)

    return _make(a.data.reshape(shape), (a,), bw, "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def bw(g):
        return (np.transpose(g, inv),)

    return _make(out, (a,), bw, "transpose")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: ids outside [0, {table.shape[0]})")
    out = table.data[ids]

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _make(out, (table,), bw, "embedding_lookup")


def masked_softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis; masked entries get exactly zero mass."""
    data = x.data
    if mask is None:
        m = np.ones(data.shape, dtype=bool)
    else:
        m = np.broadcast_to(np.asarray(mask) > 0, data.shape)
        if np.shape(mask) != data.shape and np.ndim(mask) > data.ndim:
            raise ShapeError(f"masked_softmax: mask shape {np.shape(mask)} vs input {data.shape}")
    if data.shape[-1] == 0 or not m.any(axis=-1).all():
        raise ShapeError("masked_softmax: a row has no unmasked entry")
    shifted = np.where(m, data, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(m, np.exp(shifted), 0.0)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out.astype(data.dtype, copy=False), (x,), bw, "masked_softmax")


def max_over_axis(x: Tensor, axis: int = -1) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the first maximiser."""
    arg = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _make(out, (x,), bw, "max_over_axis")


# ---------------------------------------------------------------------------
# recurrent kernel

def gru(x: Tensor, h0: Tensor, W: Tensor, U: Tensor, b: Tensor, mask=None, reverse: bool = False) -> Tensor:
    """Run a GRU over batched sequences.

    ``x`` is ``[B, T, D]``, ``h0`` is ``[B, H]``, ``W`` is ``[D, 3H]``,
    ``U`` is ``[H, 3H]`` and ``b`` is ``[3H]`` with gate blocks ordered
    update, reset, candidate.  Returns the state after each position,
    ``[B, T, H]``; positions where ``mask`` is 0 carry the previous state.
    With ``reverse`` the sequence is consumed right to left and state ``t``
    is the state after reading position ``t``.
    """
    if x.data.ndim != 3:
        raise ShapeError(f"gru: input must be [B, T, D], got {x.shape}")
    B, T, D = x.shape
    H = U.shape[0]
    if W.shape != (D, 3 * H) or U.shape != (H, 3 * H) or b.shape != (3 * H,) or h0.shape != (B, H):
        raise ShapeError(
            f"gru: shapes x{x.shape} h0{h0.shape} W{W.shape} U{U.shape} b{b.shape} do not conform"
        )
    if T == 0:
        raise ShapeError("gru: empty sequence")
    dtype = x.dtype
    m = np.ones((B, T), dtype=dtype) if mask is None else np.asarray(mask, dtype=dtype).reshape(B, T)
    xs = np.transpose(x.data, (1, 0, 2))
    ms = m.T
    if reverse:
        xs = xs[::-1]
        ms = ms[::-1]
    xw = np.ascontiguousarray(xs @ W.data + b.data, dtype=dtype)
    ms = np.ascontiguousarray(ms)
    h0d = np.ascontiguousarray(h0.data, dtype=dtype)
    Ud = np.ascontiguousarray(U.data, dtype=dtype)
    states, zg, rg, ng = kernels.gru_forward(xw, h0d, Ud, ms)
    xs_c = xs

    out = states[::-1] if reverse else states
    out = np.ascontiguousarray(np.transpose(out, (1, 0, 2)))

    def bw(g):
        gs = np.transpose(g, (1, 0, 2))
        if reverse:
            gs = gs[::-1]
        dxw, dh0, dU = kernels.gru_backward(np.ascontiguousarray(gs, dtype=dtype), h0d, Ud, ms, states, zg, rg, ng)
        dW = np.tensordot(xs_c, dxw, axes=([0, 1], [0, 1]))
        db = dxw.sum(axis=(0, 1))
        dxs = dxw @ W.data.T
        if reverse:
            dxs = dxs[::-1]
        return np.transpose(dxs, (1, 0, 2)), dh0, dW, dU, db

    return _make(out, (x, h0, W, U, b), bw, "gru")


# ---------------------------------------------------------------------------
# graph traversal

def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not track gradients")
    if loss.is_leaf:
        loss.grad = loss.grad + np.ones_like(loss.data)
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = node.grad + g.astype(node.dtype, copy=False)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
