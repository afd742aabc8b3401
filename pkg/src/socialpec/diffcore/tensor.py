"""Define-by-run reverse-mode tape over float64 numpy arrays.

Every primitive returns a new :class:`Tensor` holding its forward value and,
when any input requires a gradient, a closure mapping the upstream gradient to
gradients for each parent. ``Tensor.backward`` replays those closures in
reverse topological order.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

_state = threading.local()


class ShapeError(ValueError):
    """Raised when a primitive receives incompatible shapes."""


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording in the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, grad: np.ndarray | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        # leaves may share a gradient buffer owned by a ParamStore
        self.grad = grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    # operator sugar; each maps onto a named primitive below
    def __add__(self, other):
        return add(self, _as_tensor(other, self.shape))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.shape))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward: implicit seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x, shape=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if shape is not None and arr.ndim == 0:
        arr = np.full(shape, float(arr))
    return Tensor(arr)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
    """Wrap a forward value as a tape node. Used by fused layers outside this module."""
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.op = op
    else:
        out.op = op
    return out


def _require_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _require_suffix(op: str, a: Tensor, b: Tensor) -> None:
    if b.ndim > a.ndim or a.shape[a.ndim - b.ndim:] != b.shape:
        raise ShapeError(f"{op}: shape {b.shape} does not broadcast onto {a.shape}")


def _sum_to_suffix(g: np.ndarray, ndim: int) -> np.ndarray:
    lead = g.ndim - ndim
    return g.sum(axis=tuple(range(lead))) if lead else g


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same("add", a, b)
    return make_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same("sub", a, b)
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def broadcast_add(a: Tensor, b: Tensor) -> Tensor:
    """``a + b`` where ``b.shape`` is a trailing suffix of ``a.shape``."""
    _require_suffix("broadcast_add", a, b)
    return make_op(a.data + b.data, (a, b), lambda g: (g, _sum_to_suffix(g, b.ndim)), "broadcast_add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; ``b`` may be a trailing-suffix broadcast of ``a``."""
    _require_suffix("mul", a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return g * bd, _sum_to_suffix(g * ad, bd.ndim)

    return make_op(ad * bd, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return make_op(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` with ``a`` of shape (..., n, k) and ``b`` of shape (k, m)."""
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ bd.T
        a2 = ad.reshape(-1, ad.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_op(ad @ bd, (a, b), backward, "matmul")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return make_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    pos = a.data > 0
    return make_op(np.where(pos, a.data, slope * a.data), (a,),
                   lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def log(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.log(x), (a,), lambda g: (g / x,), "log")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return make_op(y, (a,), lambda g: (g * y,), "exp")


def l2_norm(a: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm over ``axis``; the gradient at a zero vector is taken as 0."""
    x = a.data
    n = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))

    def backward(g):
        safe = np.where(n > 0, n, 1.0)
        return (np.expand_dims(g, axis) * np.where(n > 0, x / safe, 0.0),)

    return make_op(np.squeeze(n, axis=axis), (a,), backward, "l2_norm")


def max_pool1d(a: Tensor, stride: int, axis: int = -1) -> Tensor:
    """Non-overlapping max pooling with window == stride, ceil mode.

    A trailing partial window is pooled on its own, so an axis of length n
    becomes ceil(n / stride).
    """
    if stride < 1:
        raise ShapeError(f"max_pool1d: stride must be >= 1, got {stride}")
    x = np.moveaxis(a.data, axis, -1)
    n = x.shape[-1]
    n_out = -(-n // stride)
    pad = n_out * stride - n
    if pad:
        x = np.concatenate([x, np.full(x.shape[:-1] + (pad,), -np.inf)], axis=-1)
    win = x.reshape(x.shape[:-1] + (n_out, stride))
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros(win.shape)
        np.put_along_axis(gw, arg[..., None], np.moveaxis(g, axis, -1)[..., None], axis=-1)
        gx = gw.reshape(gw.shape[:-2] + (n_out * stride,))[..., :n]
        return (np.moveaxis(gx, -1, axis),)

    return make_op(np.moveaxis(out, -1, axis), (a,), backward, "max_pool1d")


def max_over_axis(a: Tensor, axis: int, mask: np.ndarray | None = None,
                  initial: float | None = None) -> Tensor:
    """Maximum over ``axis``.

    ``mask`` (broadcastable to the leading ``axis + 1`` dims) excludes entries;
    ``initial`` is an extra candidate that also serves as the value of an
    all-masked or empty slice. Ties go to the lowest index; ``initial`` wins
    only when strictly greater.
    """
    axis = axis % a.ndim
    x = a.data
    if mask is not None:
        m = np.asarray(mask, dtype=bool).reshape(mask.shape + (1,) * (x.ndim - np.ndim(mask)))
        x = np.where(m, x, -np.inf)
    if x.shape[axis] == 0:
        if initial is None:
            raise ShapeError(f"max_over_axis: empty axis {axis} of shape {a.shape} without initial")
        out_shape = x.shape[:axis] + x.shape[axis + 1:]
        return make_op(np.full(out_shape, float(initial)), (a,), lambda g: (np.zeros(a.shape),), "max_over_axis")
    arg = np.argmax(x, axis=axis)
    best = np.take_along_axis(x, np.expand_dims(arg, axis), axis=axis).squeeze(axis)
    if initial is not None:
        routed = best >= initial
        out = np.where(routed, best, float(initial))
    else:
        routed = np.ones(best.shape, dtype=bool)
        out = best

    def backward(g):
        gx = np.zeros(a.shape)
        np.put_along_axis(gx, np.expand_dims(arg, axis), np.expand_dims(np.where(routed, g, 0.0), axis), axis=axis)
        return (gx,)

    return make_op(out, (a,), backward, "max_over_axis")


def slice_(a: Tensor, index) -> Tensor:
    """Basic (view) indexing: ints, slices, Ellipsis."""
    if not isinstance(index, tuple):
        index = (index,)
    for ix in index:
        if not (isinstance(ix, (int, np.integer, slice)) or ix is Ellipsis):
            raise ShapeError(f"slice: only basic indexing is supported, got {type(ix).__name__}")

    def backward(g):
        gx = np.zeros(a.shape)
        gx[index] = g
        return (gx,)

    return make_op(a.data[index], (a,), backward, "slice")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not xs:
        raise ShapeError("concat: empty input list")
    ref = xs[0].shape
    ax = axis % len(ref)
    for t in xs[1:]:
        if t.ndim != len(ref) or t.shape[:ax] + t.shape[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape}")
    sizes = [t.shape[ax] for t in xs]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=ax))

    return make_op(np.concatenate([t.data for t in xs], axis=ax), tuple(xs), backward, "concat")


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return make_op(np.sum(a.data, axis=axis), (a,), backward, "reduce_sum")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return make_op(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")
