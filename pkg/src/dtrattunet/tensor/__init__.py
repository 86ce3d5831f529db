"""Tensor substrate: dense arrays, differentiable primitives and gradient checking."""

from .gradcheck import gradcheck
from .kernels import BACKEND
from .ops import (
    activation,
    add,
    batchnorm2d,
    concat_channels,
    conv2d,
    gelu,
    layernorm,
    linear,
    matmul,
    maxpool2x2,
    mean,
    mul,
    permute,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_lastdim,
    sub,
    upsample_bilinear2x,
)
from .ops import sum as tsum
from .rng import RngState, stream_rng
from .tensor import (
    DEFAULT_DTYPE,
    NonFiniteError,
    Tensor,
    as_tensor,
    is_grad_enabled,
    make_result,
    no_grad,
    set_finite_checks,
)

__all__ = [
    "BACKEND",
    "DEFAULT_DTYPE",
    "NonFiniteError",
    "RngState",
    "Tensor",
    "activation",
    "add",
    "as_tensor",
    "batchnorm2d",
    "concat_channels",
    "conv2d",
    "gelu",
    "gradcheck",
    "is_grad_enabled",
    "layernorm",
    "linear",
    "make_result",
    "matmul",
    "maxpool2x2",
    "mean",
    "mul",
    "no_grad",
    "permute",
    "relu",
    "reshape",
    "set_finite_checks",
    "sigmoid",
    "softmax",
    "softmax_lastdim",
    "stream_rng",
    "sub",
    "tsum",
    "upsample_bilinear2x",
]
