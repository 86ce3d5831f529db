"""Pure-numpy implementations of the spatial kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and the same floating-point summation order, so the two backends
agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def im2col3x3(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N*H*W, 9*C) patch rows, zero padding 1, stride 1.

    Columns are ordered (ky, kx, c), so a kernel (O, C, 3, 3) pairs with
    ``w.transpose(0, 2, 3, 1).reshape(O, 9 * C)``.
    """
    n, c, h, w = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x.transpose(0, 2, 3, 1)
    cols = np.empty((n, h, w, 3, 3, c), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, :, :, ky, kx, :] = xp[:, ky : ky + h, kx : kx + w, :]
    return cols.reshape(n * h * w, 9 * c)


def col2im3x3(cols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    """Adjoint of ``im2col3x3``: scatter-add patch-row gradients back to (N, C, H, W)."""
    n, c, h, w = shape
    cols = cols.reshape(n, h, w, 3, 3, c)
    xp = np.zeros((n, h + 2, w + 2, c), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            xp[:, ky : ky + h, kx : kx + w, :] += cols[:, :, :, ky, kx, :]
    return np.ascontiguousarray(xp[:, 1:-1, 1:-1, :].transpose(0, 3, 1, 2))


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pool. Returns (out, argmax index 0..3 row-major in window)."""
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, c, ho, wo = dout.shape
    onehot = idx[..., None] == np.arange(4, dtype=np.uint8)
    win = np.where(onehot, dout[..., None], np.zeros((), dtype=dout.dtype))
    return np.ascontiguousarray(
        win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * 2, wo * 2)
    )


def _up_axis(x: np.ndarray, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, -1)
    prev = np.concatenate([x[..., :1], x[..., :-1]], axis=-1)
    nxt = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],), dtype=x.dtype)
    out[..., 0::2] = 0.75 * x + 0.25 * prev
    out[..., 1::2] = 0.75 * x + 0.25 * nxt
    return np.moveaxis(out, -1, axis)


def _up_axis_backward(d: np.ndarray, axis: int) -> np.ndarray:
    d = np.moveaxis(d, axis, -1)
    de = d[..., 0::2]
    do = d[..., 1::2]
    g = 0.75 * de + 0.75 * do
    # contributions routed through the clamped neighbours
    g[..., :-1] += 0.25 * de[..., 1:]
    g[..., 0] += 0.25 * de[..., 0]
    g[..., 1:] += 0.25 * do[..., :-1]
    g[..., -1] += 0.25 * do[..., -1]
    return np.moveaxis(g, -1, axis)


def upsample2x(x: np.ndarray) -> np.ndarray:
    """Bilinear x2, half-pixel centres, edge clamp. Rows first, then columns."""
    return np.ascontiguousarray(_up_axis(_up_axis(x, 2), 3))


def upsample2x_backward(dout: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(_up_axis_backward(_up_axis_backward(dout, 3), 2))
