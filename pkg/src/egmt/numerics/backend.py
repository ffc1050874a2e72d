"""Kernel backend selection.

The compiled Cython kernels are preferred when the extension was built;
otherwise the numpy kernels are used.  EGMT_BACKEND=python|compiled|auto
overrides the choice (compiled raises if the extension is missing, so a
silent fallback can never masquerade as the compiled path).
"""

import os

import numpy as np

from . import kernels_numpy

BACKEND_ENV = "EGMT_BACKEND"


def _select():
    choice = os.environ.get(BACKEND_ENV, "auto").strip().lower() or "auto"
    if choice not in {"auto", "compiled", "python"}:
        raise ValueError(f"{BACKEND_ENV} must be auto, compiled or python, got {choice!r}")
    if choice == "python":
        return kernels_numpy, "python"
    try:
        from . import _convkernels
    except ImportError:
        if choice == "compiled":
            raise ImportError(
                "EGMT_BACKEND=compiled but the extension is not built; "
                "reinstall with a C compiler available"
            )
        return kernels_numpy, "python"
    return _convkernels, "compiled"


_impl, BACKEND = _select()


def _contig(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a)


def conv2d_forward(x, w, stride):
    if BACKEND == "compiled":
        return _impl.conv2d_forward(_contig(x), _contig(w), stride)
    return _impl.conv2d_forward(x, w, stride)


def conv2d_backward_input(g, w, x_shape, stride):
    if BACKEND == "compiled":
        return _impl.conv2d_backward_input(_contig(g), _contig(w), tuple(x_shape), stride)
    return _impl.conv2d_backward_input(g, w, x_shape, stride)


def conv2d_backward_weight(g, x, w_shape, stride):
    if BACKEND == "compiled":
        return _impl.conv2d_backward_weight(_contig(g), _contig(x), tuple(w_shape), stride)
    return _impl.conv2d_backward_weight(g, x, w_shape, stride)
