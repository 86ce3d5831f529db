# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled spatial kernels.

Twins of ``_npkernels``; loops reproduce the numpy summation order so both
backends return identical bits.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.string cimport memcpy, memset

cnp.import_array()


def im2col3x3(x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    xt = np.ascontiguousarray(np.asarray(x).transpose(0, 2, 3, 1))
    out = np.empty((n, h, w, 3, 3, c), dtype=xt.dtype)
    _im2col_impl(xt, out)
    return out.reshape(n * h * w, 9 * c)


def _im2col_impl(floating[:, :, :, ::1] xt, floating[:, :, :, :, :, ::1] o):
    cdef Py_ssize_t n = xt.shape[0], h = xt.shape[1], w = xt.shape[2], c = xt.shape[3]
    cdef Py_ssize_t b, i, j, ky, kx, si, sj
    cdef size_t row = c * sizeof(floating)
    cdef floating* dst
    with nogil:
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    for ky in range(3):
                        si = i + ky - 1
                        for kx in range(3):
                            sj = j + kx - 1
                            dst = &o[b, i, j, ky, kx, 0]
                            if si < 0 or si >= h or sj < 0 or sj >= w:
                                memset(dst, 0, row)
                            else:
                                memcpy(dst, &xt[b, si, sj, 0], row)


def col2im3x3(cols, shape):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cl = np.ascontiguousarray(cols).reshape(n, h, w, 3, 3, c)
    acc = np.zeros((n, h + 2, w + 2, c), dtype=cl.dtype)
    _col2im_impl(cl, acc)
    return np.ascontiguousarray(acc[:, 1:-1, 1:-1, :].transpose(0, 3, 1, 2))


def _col2im_impl(floating[:, :, :, :, :, ::1] cl, floating[:, :, :, ::1] a):
    # same per-element order as the numpy twin: zero, then (ky, kx) row-major
    cdef Py_ssize_t n = cl.shape[0], h = cl.shape[1], w = cl.shape[2], c = cl.shape[5]
    cdef Py_ssize_t b, i, j, ky, kx, ci
    with nogil:
        for b in range(n):
            for ky in range(3):
                for kx in range(3):
                    for i in range(h):
                        for j in range(w):
                            for ci in range(c):
                                a[b, i + ky, j + kx, ci] += cl[b, i, j, ky, kx, ci]


def maxpool2x2(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], ho = x.shape[2] // 2, wo = x.shape[3] // 2
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((n, c, ho, wo), dtype=dtype)
    idx = np.empty((n, c, ho, wo), dtype=np.uint8)
    cdef floating[:, :, :, ::1] o = out
    cdef cnp.uint8_t[:, :, :, ::1] ix = idx
    cdef Py_ssize_t b, ci, i, j
    cdef floating best, v
    cdef cnp.uint8_t k
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(ho):
                    for j in range(wo):
                        best = x[b, ci, 2 * i, 2 * j]
                        k = 0
                        v = x[b, ci, 2 * i, 2 * j + 1]
                        if v > best:
                            best = v
                            k = 1
                        v = x[b, ci, 2 * i + 1, 2 * j]
                        if v > best:
                            best = v
                            k = 2
                        v = x[b, ci, 2 * i + 1, 2 * j + 1]
                        if v > best:
                            best = v
                            k = 3
                        o[b, ci, i, j] = best
                        ix[b, ci, i, j] = k
    return out, idx


def maxpool2x2_backward(floating[:, :, :, ::1] dout, cnp.uint8_t[:, :, :, ::1] idx):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], ho = dout.shape[2], wo = dout.shape[3]
    dtype = np.float32 if floating is float else np.float64
    dx = np.zeros((n, c, 2 * ho, 2 * wo), dtype=dtype)
    cdef floating[:, :, :, ::1] d = dx
    cdef Py_ssize_t b, ci, i, j
    cdef cnp.uint8_t k
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(ho):
                    for j in range(wo):
                        k = idx[b, ci, i, j]
                        d[b, ci, 2 * i + (k >> 1), 2 * j + (k & 1)] = dout[b, ci, i, j]
    return dx


def upsample2x(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    tmp = np.empty((n, c, 2 * h, w), dtype=dtype)
    out = np.empty((n, c, 2 * h, 2 * w), dtype=dtype)
    cdef floating[:, :, :, ::1] t = tmp
    cdef floating[:, :, :, ::1] o = out
    cdef floating a = 0.75, q = 0.25
    cdef Py_ssize_t b, ci, i, j, ip, inx, jp, jn
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(h):
                    ip = i - 1 if i > 0 else 0
                    inx = i + 1 if i + 1 < h else h - 1
                    for j in range(w):
                        t[b, ci, 2 * i, j] = a * x[b, ci, i, j] + q * x[b, ci, ip, j]
                        t[b, ci, 2 * i + 1, j] = a * x[b, ci, i, j] + q * x[b, ci, inx, j]
                for i in range(2 * h):
                    for j in range(w):
                        jp = j - 1 if j > 0 else 0
                        jn = j + 1 if j + 1 < w else w - 1
                        o[b, ci, i, 2 * j] = a * t[b, ci, i, j] + q * t[b, ci, i, jp]
                        o[b, ci, i, 2 * j + 1] = a * t[b, ci, i, j] + q * t[b, ci, i, jn]
    return out


def upsample2x_backward(floating[:, :, :, ::1] dout):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], h = dout.shape[2] // 2, w = dout.shape[3] // 2
    dtype = np.float32 if floating is float else np.float64
    tmp = np.empty((n, c, 2 * h, w), dtype=dtype)
    dx = np.empty((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] t = tmp
    cdef floating[:, :, :, ::1] d = dx
    cdef floating a = 0.75, q = 0.25, acc
    cdef Py_ssize_t b, ci, i, j
    with nogil:
        for b in range(n):
            for ci in range(c):
                # columns
                for i in range(2 * h):
                    for j in range(w):
                        acc = a * dout[b, ci, i, 2 * j] + a * dout[b, ci, i, 2 * j + 1]
                        if j < w - 1:
                            acc = acc + q * dout[b, ci, i, 2 * j + 2]
                        if j == 0:
                            acc = acc + q * dout[b, ci, i, 0]
                        if j > 0:
                            acc = acc + q * dout[b, ci, i, 2 * j - 1]
                        if j == w - 1:
                            acc = acc + q * dout[b, ci, i, 2 * w - 1]
                        t[b, ci, i, j] = acc
                # rows
                for i in range(h):
                    for j in range(w):
                        acc = a * t[b, ci, 2 * i, j] + a * t[b, ci, 2 * i + 1, j]
                        if i < h - 1:
                            acc = acc + q * t[b, ci, 2 * i + 2, j]
                        if i == 0:
                            acc = acc + q * t[b, ci, 0, j]
                        if i > 0:
                            acc = acc + q * t[b, ci, 2 * i - 1, j]
                        if i == h - 1:
                            acc = acc + q * t[b, ci, 2 * h - 1, j]
                        d[b, ci, i, j] = acc
    return dx
