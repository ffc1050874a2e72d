"""Pure-numpy convolution kernels (valid mode, square stride).

Each kernel tap contributes one GEMM over the strided input view, so the
k*k loop stays in Python while the arithmetic runs in BLAS.  No im2col
buffer is ever materialized beyond one tap's worth of input.
"""

import numpy as np


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Correlate x[Cin,H,W] with w[Cout,Cin,kh,kw] -> [Cout,Ho,Wo]."""
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = (h - kh) // stride + 1
    wo = (wd - kw) // stride + 1
    hi = stride * (ho - 1) + 1
    wi = stride * (wo - 1) + 1
    out = np.zeros((cout, ho * wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            tap = x[:, i : i + hi : stride, j : j + wi : stride]
            out += w[:, :, i, j] @ tap.reshape(cin, -1)
    return out.reshape(cout, ho, wo)


def conv2d_backward_input(g: np.ndarray, w: np.ndarray, x_shape: tuple, stride: int) -> np.ndarray:
    cout, ho, wo = g.shape
    _, _, kh, kw = w.shape
    gx = np.zeros(x_shape, dtype=g.dtype)
    gf = g.reshape(cout, -1)
    hi = stride * (ho - 1) + 1
    wi = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            contrib = (w[:, :, i, j].T @ gf).reshape(-1, ho, wo)
            gx[:, i : i + hi : stride, j : j + wi : stride] += contrib
    return gx


def conv2d_backward_weight(g: np.ndarray, x: np.ndarray, w_shape: tuple, stride: int) -> np.ndarray:
    cout, ho, wo = g.shape
    _, cin, kh, kw = w_shape
    gw = np.empty(w_shape, dtype=g.dtype)
    gf = g.reshape(cout, -1)
    hi = stride * (ho - 1) + 1
    wi = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            tap = x[:, i : i + hi : stride, j : j + wi : stride].reshape(cin, -1)
            gw[:, :, i, j] = gf @ tap.T
    return gw
