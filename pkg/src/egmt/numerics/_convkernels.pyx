# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels (valid mode).

Same contract as kernels_numpy; direct loops instead of GEMMs, so there
are no temporaries at all.  Single threaded on purpose: accumulation
order is fixed, results are reproducible run to run.
"""

import numpy as np

cimport cython


ctypedef fused floating:
    float
    double


def conv2d_forward(floating[:, :, ::1] x, floating[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (wd - kw) // stride + 1
    out_arr = np.zeros((cout, ho, wo), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, c, i, j, oh, ow
    cdef floating wv
    with nogil:
        for o in range(cout):
            for c in range(cin):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[o, c, i, j]
                        for oh in range(ho):
                            for ow in range(wo):
                                out[o, oh, ow] += wv * x[c, oh * stride + i, ow * stride + j]
    return out_arr


def conv2d_backward_input(floating[:, :, ::1] g, floating[:, :, :, ::1] w, x_shape, int stride):
    cdef Py_ssize_t cout = g.shape[0], ho = g.shape[1], wo = g.shape[2]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    gx_arr = np.zeros(x_shape, dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t o, c, i, j, oh, ow
    cdef floating wv
    with nogil:
        for o in range(cout):
            for c in range(gx.shape[0]):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[o, c, i, j]
                        for oh in range(ho):
                            for ow in range(wo):
                                gx[c, oh * stride + i, ow * stride + j] += wv * g[o, oh, ow]
    return gx_arr


def conv2d_backward_weight(floating[:, :, ::1] g, floating[:, :, ::1] x, w_shape, int stride):
    cdef Py_ssize_t cout = g.shape[0], ho = g.shape[1], wo = g.shape[2]
    cdef Py_ssize_t cin = w_shape[1], kh = w_shape[2], kw = w_shape[3]
    gw_arr = np.zeros(w_shape, dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t o, c, i, j, oh, ow
    cdef floating acc
    with nogil:
        for o in range(cout):
            for c in range(cin):
                for i in range(kh):
                    for j in range(kw):
                        acc = 0
                        for oh in range(ho):
                            for ow in range(wo):
                                acc += g[o, oh, ow] * x[c, oh * stride + i, ow * stride + j]
                        gw[o, c, i, j] = acc
    return gw_arr
