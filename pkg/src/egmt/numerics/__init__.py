"""Numeric foundations: autodiff tensors, kernels, RNG, serialization."""

from .backend import BACKEND
from .conv import conv2d
from .gradcheck import GradCheckResult, grad_check
from .rng import Rng
from .serialize import (
    read_container,
    read_tensor,
    write_container,
    write_tensor,
)
from .tensor import (
    Tensor,
    absolute,
    add,
    clip,
    concat,
    div,
    exp,
    full,
    gelu,
    is_grad_enabled,
    layer_norm,
    leaky_relu,
    log,
    matmul,
    maximum,
    mul,
    neg,
    no_grad,
    ones,
    pad2d,
    reshape,
    set_finite_checks,
    sigmoid,
    softmax_rows,
    sqrt,
    sub,
    tanh,
    tensor,
    tensor_max,
    tensor_mean,
    tensor_sum,
    transpose,
    zeros,
)

__all__ = [
    "BACKEND",
    "Tensor",
    "Rng",
    "GradCheckResult",
    "grad_check",
    "conv2d",
    "read_container",
    "read_tensor",
    "write_container",
    "write_tensor",
    "absolute",
    "add",
    "clip",
    "concat",
    "div",
    "exp",
    "full",
    "gelu",
    "is_grad_enabled",
    "layer_norm",
    "leaky_relu",
    "log",
    "matmul",
    "maximum",
    "mul",
    "neg",
    "no_grad",
    "ones",
    "pad2d",
    "reshape",
    "set_finite_checks",
    "sigmoid",
    "softmax_rows",
    "sqrt",
    "sub",
    "tanh",
    "tensor",
    "tensor_max",
    "tensor_mean",
    "tensor_sum",
    "transpose",
    "zeros",
]
