"""Differentiable 2-D convolution built on the selected kernel backend."""

from __future__ import annotations

from . import backend
from .tensor import Tensor, _coerce, _make, pad2d

__all__ = ["conv2d"]


def _conv_valid(x: Tensor, w: Tensor, stride: int) -> Tensor:
    out = backend.conv2d_forward(x.data, w.data, stride)

    def vjp(g):
        gx = backend.conv2d_backward_input(g, w.data, x.data.shape, stride)
        gw = backend.conv2d_backward_weight(g, x.data, w.data.shape, stride)
        return gx, gw

    return _make(out, (x, w), vjp)


def conv2d(x, w, bias=None, stride: int = 1, padding: str = "reflect") -> Tensor:
    """Cross-correlate x[Cin,H,W] with w[Cout,Cin,k,k].

    padding "reflect" or "zero" pads floor(k/2) on each side first, so with
    stride 1 the spatial extent is preserved for odd k; "none" is a valid
    convolution.  Output extent per axis is floor((H + 2*pad - k)/stride) + 1.
    """
    x, w = _coerce(x), _coerce(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError("conv2d expects x[Cin,H,W] and w[Cout,Cin,kh,kw]")
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"channel mismatch: x has {x.shape[0]}, w expects {w.shape[1]}")
    if x.data.dtype != w.data.dtype:
        raise TypeError("conv2d requires matching dtypes for input and kernel")
    if padding not in ("reflect", "zero", "none"):
        raise ValueError(f"unknown padding mode: {padding!r}")
    if padding != "none":
        pad = w.shape[2] // 2
        if pad:
            x = pad2d(x, pad, padding)
    out = _conv_valid(x, w, stride)
    if bias is not None:
        bias = _coerce(bias)
        out = out + bias.reshape(-1, 1, 1)
    return out
