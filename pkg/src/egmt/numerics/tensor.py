"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` and records the operations applied to
it.  Calling :meth:`Tensor.backward` on a scalar result walks the recorded
graph in reverse topological order and accumulates vector-Jacobian products
into ``.grad`` of every tensor with ``requires_grad=True``.

Design notes:

* Operations are free functions plus thin method/operator aliases.  Each
  primitive builds the output tensor and a closure computing the parent
  gradients from the output gradient.
* Gradients are plain ndarrays, never Tensors; no higher-order derivatives.
* dtype is sticky: float32 in, float32 out.  Mixing float32 and float64
  promotes to float64 (numpy rules).
* Non-finite values are treated as an error state.  Checking every output
  is too slow to leave on permanently, so it is a switch
  (:func:`set_finite_checks`) that the test-suite enables.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "zeros",
    "ones",
    "full",
    "no_grad",
    "is_grad_enabled",
    "set_finite_checks",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "reshape",
    "transpose",
    "concat",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "absolute",
    "sigmoid",
    "leaky_relu",
    "gelu",
    "clip",
    "maximum",
    "tensor_sum",
    "tensor_mean",
    "tensor_max",
    "softmax_rows",
    "layer_norm",
    "pad2d",
]

_state = threading.local()


def _grad_on() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / numeric probes)."""
    prev = _grad_on()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_on()


_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    """Globally toggle per-operation finiteness assertions."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


class Tensor:
    """An ndarray plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None, name=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._vjp = vjp
        self.name = name
        if _CHECK_FINITE and not np.all(np.isfinite(arr)):
            raise FloatingPointError(
                f"non-finite values in tensor {name or '<anon>'}"
            )

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=False)

    def __repr__(self):
        head = f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}"
        if self.name:
            head += f", name={self.name!r}"
        return head + ")"

    # -- graph traversal ----------------------------------------------------

    def backward(self, grad=None) -> None:
        """Accumulate gradients of ``self`` into every reachable leaf.

        ``self`` must be scalar unless an explicit output gradient is given.
        Gradients sum across repeated backward() calls; callers reset
        ``.grad`` to None between optimization steps.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ValueError("output gradient shape mismatch")

        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is not None:
                for parent, pg in zip(node._parents, node._vjp(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            elif node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
        # Interior nodes were popped as they were consumed; anything left
        # belongs to leaves that never received a vjp pass (unreachable).

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims=False):
        return tensor_max(self, axis=axis, keepdims=keepdims)


def tensor(data, dtype=None, requires_grad=False, name=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=requires_grad, name=name)


def zeros(shape, dtype=np.float64, requires_grad=False, name=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad, name=name)


def ones(shape, dtype=np.float64, requires_grad=False, name=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad, name=name)


def full(shape, value, dtype=np.float64, requires_grad=False, name=None) -> Tensor:
    return Tensor(np.full(shape, value, dtype=dtype), requires_grad=requires_grad, name=name)


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse topological order via iterative post-order DFS."""
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
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def _coerce(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return tensor(x, dtype=dtype)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(data, parents, vjp, name=None) -> Tensor:
    requires = _grad_on() and any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data, requires_grad=False, name=name)
    return Tensor(data, requires_grad=True, parents=tuple(parents), vjp=vjp, name=name)


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b, like=a)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b, like=a)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b, like=a)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b, like=a)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * out / b.data, b.data.shape),
        )

    return _make(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = _coerce(a)

    def vjp(g):
        return (-g,)

    return _make(-a.data, (a,), vjp)


def power(a, p: float) -> Tensor:
    """Elementwise ``a ** p`` for a constant exponent."""
    a = _coerce(a)
    p = float(p)
    out = a.data**p

    def vjp(g):
        if p == 0.0:
            return (np.zeros_like(a.data),)
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), vjp)


# -- matmul / shape ops ----------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching rules on the leading axes."""
    a, b = _coerce(a), _coerce(b)
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(out, (a, b), vjp)


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _make(out, (a,), vjp)


def transpose(a, axes=None) -> Tensor:
    a = _coerce(a)
    out = np.transpose(a.data, axes)
    inverse = None if axes is None else np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inverse),)

    return _make(out, (a,), vjp)


def getitem(a, key) -> Tensor:
    a = _coerce(a)
    out = a.data[key]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(out, (a,), vjp)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), vjp)


# -- elementwise nonlinearities --------------------------------------------


def exp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp)


def log(a) -> Tensor:
    a = _coerce(a)
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _make(out, (a,), vjp)


def sqrt(a) -> Tensor:
    a = _coerce(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), vjp)


def tanh(a) -> Tensor:
    a = _coerce(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), vjp)


def absolute(a) -> Tensor:
    """|a|, with the subgradient at 0 taken as 0 (sign convention of np.sign)."""
    a = _coerce(a)
    out = np.abs(a.data)

    def vjp(g):
        return (g * np.sign(a.data),)

    return _make(out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    # exp() only ever sees non-positive arguments, so no overflow.
    x = a.data
    t = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), vjp)


def leaky_relu(a, slope=0.2) -> Tensor:
    a = _coerce(a)
    factor = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    out = a.data * factor

    def vjp(g):
        return (g * factor,)

    return _make(out, (a,), vjp)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    a = _coerce(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dt = (1.0 - t * t) * dinner
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return _make(out, (a,), vjp)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero outside the open interval."""
    a = _coerce(a)
    out = np.clip(a.data, lo, hi)
    inside = ((a.data > lo) & (a.data < hi)).astype(a.data.dtype)

    def vjp(g):
        return (g * inside,)

    return _make(out, (a,), vjp)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    a, b = _coerce(a), _coerce(b, like=a)
    take_a = (a.data >= b.data).astype(a.data.dtype)
    out = np.maximum(a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * (1.0 - take_a), b.data.shape),
        )

    return _make(out, (a, b), vjp)


# -- reductions ------------------------------------------------------------


def _restore_axes(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    g = np.asarray(g)
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        g = np.expand_dims(g, tuple(ax % len(shape) for ax in axes))
    return np.broadcast_to(g, shape)


def tensor_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        return (_restore_axes(np.asarray(g), a.data.shape, axis, keepdims).copy(),)

    return _make(out, (a,), vjp)


def tensor_mean(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)]
    )

    def vjp(g):
        g = np.asarray(g) / count
        return (_restore_axes(g, a.data.shape, axis, keepdims).copy(),)

    return _make(out, (a,), vjp)


def tensor_max(a, axis=None, keepdims=False) -> Tensor:
    """Max reduction; on ties the gradient goes to the first maximum."""
    a = _coerce(a)
    if axis is None:
        flat = a.data.reshape(-1)
        idx = int(np.argmax(flat))
        out = flat[idx]

        def vjp(g):
            ga = np.zeros_like(a.data)
            ga.reshape(-1)[idx] = np.asarray(g).reshape(())
            return (ga,)

        return _make(out, (a,), vjp)

    if not isinstance(axis, int):
        raise ValueError("tensor_max supports a single axis or None")
    ax = axis % a.data.ndim
    idx = np.argmax(a.data, axis=ax)
    out = np.take_along_axis(a.data, np.expand_dims(idx, ax), axis=ax)
    if not keepdims:
        out = np.squeeze(out, axis=ax)

    def vjp(g):
        g = np.asarray(g)
        if not keepdims:
            g = np.expand_dims(g, ax)
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, ax), g, axis=ax)
        return (ga,)

    return _make(out, (a,), vjp)


# -- composite primitives --------------------------------------------------


def softmax_rows(a) -> Tensor:
    """Softmax along the last axis (each row sums to one)."""
    a = _coerce(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), vjp)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift.

    ``gain`` and ``bias`` broadcast against the last axis (shape [C]).
    """
    a, gain, bias = _coerce(a), _coerce(gain), _coerce(bias)
    mean = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mean
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    out = normed * gain.data + bias.data
    n = a.data.shape[-1]

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * normed).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dn = g * gain.data
        dvar_term = (dn * normed).mean(axis=-1, keepdims=True)
        dmean_term = dn.mean(axis=-1, keepdims=True)
        da = inv * (dn - dmean_term - normed * dvar_term)
        return da, _unbroadcast(dgain, gain.data.shape), _unbroadcast(dbias, bias.data.shape)

    return _make(out, (a, gain, bias), vjp)


def pad2d(a, width: int, mode: str = "reflect") -> Tensor:
    """Pad the trailing two axes by ``width`` on every side.

    ``mode`` is "reflect" (edge-mirrored, no repeated border) or "zero".
    The reflect backward pass folds halo gradients back onto their mirrored
    interior sources.
    """
    a = _coerce(a)
    if width == 0:
        return a
    spec = [(0, 0)] * (a.data.ndim - 2) + [(width, width), (width, width)]
    if mode == "reflect":
        out = np.pad(a.data, spec, mode="reflect")
    elif mode == "zero":
        out = np.pad(a.data, spec, mode="constant")
    else:
        raise ValueError(f"unknown padding mode: {mode!r}")

    h, w = a.data.shape[-2], a.data.shape[-1]
    if mode == "reflect" and (width > h - 1 or width > w - 1):
        raise ValueError("reflect padding wider than extent - 1")

    def vjp(g):
        if mode == "zero":
            return (g[..., width : width + h, width : width + w].copy(),)
        # Reflection is separable, so fold the halo row-wise then column-wise.
        # Padded row width-1-i mirrors interior row 1+i; padded row width+h+i
        # mirrors interior row h-2-i.
        rows = g[..., width : width + h, :].copy()
        rows[..., 1 : 1 + width, :] += g[..., :width, :][..., ::-1, :]
        rows[..., h - 1 - width : h - 1, :] += g[..., width + h :, :][..., ::-1, :]
        core = rows[..., :, width : width + w].copy()
        core[..., :, 1 : 1 + width] += rows[..., :, :width][..., ::-1]
        core[..., :, w - 1 - width : w - 1] += rows[..., :, width + w :][..., ::-1]
        return (core,)

    return _make(out, (a,), vjp)
