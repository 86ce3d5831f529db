"""Differentiable primitives.

All spatial tensors are NCHW.  Convolutions are stride 1 and shape
preserving (k in {1, 3}); downsampling is only ``maxpool2x2`` and upsampling
only ``upsample_bilinear2x``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import special

from . import kernels
from .tensor import Tensor, as_tensor, make_result

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return as_tensor(np.asarray(x, dtype=dtype), dtype=dtype)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    sa, sb = a.shape, b.shape
    return make_result(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    sa, sb = a.shape, b.shape
    return make_result(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub"
    )


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        scale = b
        return make_result(a.data * scale, (a,), lambda g: (g * scale,), "scale")
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result(ad * bd, (a, b), backward, "mul")


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return make_result(
        np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum"
    )


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return make_result(
        np.asarray(x.data.mean(), dtype=x.dtype),
        (x,),
        lambda g: (np.full(shape, g / n, dtype=g.dtype),),
        "mean",
    )


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        lambda g: (np.ascontiguousarray(g.transpose(inverse)),),
        "permute",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (batch dims must match)."""
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return make_result(ad @ bd, (a, b), backward, "matmul")


# -- activations --------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    y = special.expit(x.data)
    return make_result(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    xd = x.data
    cdf = 0.5 * (1.0 + special.erf(xd / _SQRT2))

    def backward(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI
        return (g * (cdf + xd * pdf),)

    return make_result((xd * cdf).astype(x.dtype, copy=False), (x,), backward, "gelu")


_ACTIVATIONS = {"relu": relu, "gelu": gelu, "sigmoid": sigmoid}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(x)


# -- dense layers -------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: x @ w + b with w of shape (K_in, K_out)."""
    k_in, k_out = w.shape
    if x.shape[-1] != k_in:
        raise ValueError(f"linear: input trailing dim {x.shape[-1]} != weight rows {k_in}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, k_in)
    out = x2 @ w.data
    if b is not None:
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, k_out)
        gx = (g2 @ w.data.T).reshape(lead + (k_in,)) if x.requires_grad else None
        gw = x2.T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return make_result(out.reshape(lead + (k_out,)), parents, backward, "linear")


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    k = xd.shape[-1]

    def backward(g):
        dxhat = g * gamma.data
        dx = inv / k * (k * dxhat - dxhat.sum(-1, keepdims=True) - xhat * (dxhat * xhat).sum(-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layernorm")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return make_result(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),), "softmax")


def softmax_lastdim(x: Tensor) -> Tensor:
    return softmax(x, axis=-1)


# -- spatial ops ----------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: int | None = None) -> Tensor:
    """Stride-1, shape-preserving 2-D convolution (cross-correlation), k in {1, 3}."""
    n, c, h, wd = x.shape
    o, i, kh, kw = w.shape
    if kh != kw or kh not in (1, 3):
        raise ValueError(f"conv2d supports square 1x1 or 3x3 kernels, got {kh}x{kw}")
    expected_pad = (kh - 1) // 2
    if padding is not None and padding != expected_pad:
        raise ValueError(f"conv2d is shape preserving: padding must be {expected_pad} for k={kh}")
    if c != i:
        raise ValueError(f"conv2d: input has {c} channels, kernel expects {i}")

    # patch rows (N*H*W, k*k*C) against kernel rows (O, k*k*C); this GEMM layout is the
    # fastest one for the narrow output widths of the decoder
    xd = np.ascontiguousarray(x.data)
    if kh == 3:
        cols = kernels.im2col3x3(xd)
    else:
        cols = xd.transpose(0, 2, 3, 1).reshape(n * h * wd, c)
    w2 = w.data.transpose(0, 2, 3, 1).reshape(o, kh * kw * c)
    out = cols @ w2.T
    if b is not None:
        out += b.data
    out = np.ascontiguousarray(out.reshape(n, h, wd, o).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * h * wd, o)
        gw = None
        if w.requires_grad:
            gw = np.ascontiguousarray((cols.T @ g2).reshape(kh, kw, c, o).transpose(3, 2, 0, 1))
        gx = None
        if x.requires_grad:
            if kh == 3:
                # transposed convolution as a correlation with the flipped, channel-swapped kernel;
                # cheaper than scattering patch gradients back for every layer width we use
                wf = w.data[:, :, ::-1, ::-1].transpose(1, 2, 3, 0).reshape(c, 9 * o)
                dx = kernels.im2col3x3(np.ascontiguousarray(g)) @ wf.T
            else:
                dx = g2 @ w2
            gx = np.ascontiguousarray(dx.reshape(n, h, wd, c).transpose(0, 3, 1, 2))
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return make_result(out, parents, backward, f"conv{kh}x{kw}")


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray | None,
    running_var: np.ndarray | None,
    training: bool,
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    """Batch normalisation over (N, H, W) per channel.

    In training mode the running statistics are updated in place (unbiased
    variance, PyTorch convention) and must be preallocated arrays.
    """
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batchnorm2d: affine params must have shape ({c},)")
    xd = x.data
    g4 = gamma.data.reshape(1, c, 1, 1)
    if training:
        m = n * h * w
        mu = xd.mean(axis=(0, 2, 3), keepdims=True)
        xc = xd - mu
        var = (xc * xc).mean(axis=(0, 2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        if running_mean is not None:
            unbiased = var.reshape(c) * (m / max(m - 1, 1))
            running_mean *= 1 - momentum
            running_mean += momentum * mu.reshape(c)
            running_var *= 1 - momentum
            running_var += momentum * unbiased

        def backward(g):
            dxhat = g * g4
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = inv / m * (m * dxhat - s1 - xhat * s2)
            return dx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    else:
        if running_mean is None or running_var is None:
            raise RuntimeError("batchnorm2d in eval mode needs populated running statistics")
        inv = (1.0 / np.sqrt(running_var + eps)).astype(xd.dtype).reshape(1, c, 1, 1)
        xhat = (xd - running_mean.astype(xd.dtype).reshape(1, c, 1, 1)) * inv

        def backward(g):
            return g * g4 * inv, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)
    return make_result(out.astype(xd.dtype, copy=False), (x, gamma, beta), backward, "batchnorm2d")


def maxpool2x2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial extents, got {h}x{w}")
    out, idx = kernels.maxpool2x2(np.ascontiguousarray(x.data))
    return make_result(
        out, (x,), lambda g: (kernels.maxpool2x2_backward(np.ascontiguousarray(g), idx),), "maxpool2x2"
    )


def upsample_bilinear2x(x: Tensor) -> Tensor:
    """Bilinear x2 with half-pixel centres and edge clamping.

    Output pixel (i, j) samples source coordinate ((i + 0.5) / 2 - 0.5,
    (j + 0.5) / 2 - 0.5); coordinates below 0 or above the last index clamp
    to the border.
    """
    out = kernels.upsample2x(np.ascontiguousarray(x.data))
    return make_result(
        out, (x,), lambda g: (kernels.upsample2x_backward(np.ascontiguousarray(g)),), "upsample2x"
    )


def concat_channels(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = list(xs)
    if len(xs) == 1:
        return xs[0]
    ref = xs[0].shape
    ax = axis % len(ref)
    for t in xs[1:]:
        if len(t.shape) != len(ref) or any(a != b for k, (a, b) in enumerate(zip(t.shape, ref)) if k != ax):
            raise ValueError(f"concat: shape {t.shape} incompatible with {ref} along axis {axis}")
    bounds = np.cumsum([t.shape[ax] for t in xs])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, bounds, axis=ax))

    return make_result(np.concatenate([t.data for t in xs], axis=ax), xs, backward, "concat")
