# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: direct 2D convolution and 2x2 max pooling.

Loops are ordered so the innermost index runs contiguously over output
columns, which lets the C compiler vectorize them. Semantics match
python_backend (including the first-occurrence tie-break in pooling); only
the floating-point summation order differs.
"""

import numpy as np

cimport cython

ctypedef fused floating:
    float
    double

name = "compiled"


def conv2d_forward(x, k, int padding):
    x = np.ascontiguousarray(x)
    k = np.ascontiguousarray(k)
    out = np.zeros(
        (
            x.shape[0],
            k.shape[0],
            x.shape[2] + 2 * padding - k.shape[2] + 1,
            x.shape[3] + 2 * padding - k.shape[3] + 1,
        ),
        dtype=x.dtype,
    )
    if x.dtype == np.float32:
        _conv_fwd[float](x, k, padding, out)
    else:
        _conv_fwd[double](x, k, padding, out)
    return out


def conv2d_backward(x, k, int padding, gout):
    x = np.ascontiguousarray(x)
    k = np.ascontiguousarray(k)
    gout = np.ascontiguousarray(gout)
    gx = np.zeros_like(x)
    gk = np.zeros_like(k)
    if x.dtype == np.float32:
        _conv_bwd[float](x, k, padding, gout, gx, gk)
    else:
        _conv_bwd[double](x, k, padding, gout, gx, gk)
    return gx, gk


def maxpool2d_forward(x):
    x = np.ascontiguousarray(x)
    out = np.zeros(
        (x.shape[0], x.shape[1], x.shape[2] // 2, x.shape[3] // 2), dtype=x.dtype
    )
    idx = np.zeros(out.shape, dtype=np.uint8)
    if x.dtype == np.float32:
        _pool_fwd[float](x, out, idx)
    else:
        _pool_fwd[double](x, out, idx)
    return out, idx


def maxpool2d_backward(idx, gout):
    idx = np.ascontiguousarray(idx)
    gout = np.ascontiguousarray(gout)
    gx = np.zeros(
        (gout.shape[0], gout.shape[1], gout.shape[2] * 2, gout.shape[3] * 2),
        dtype=gout.dtype,
    )
    if gout.dtype == np.float32:
        _pool_bwd[float](idx, gout, gx)
    else:
        _pool_bwd[double](idx, gout, gx)
    return gx


cdef inline Py_ssize_t _imax(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a > b else b


cdef inline Py_ssize_t _imin(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    return a if a < b else b


cdef void _conv_fwd(
    floating[:, :, :, ::1] x,
    floating[:, :, :, ::1] k,
    Py_ssize_t p,
    floating[:, :, :, ::1] out,
) noexcept nogil:
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = k.shape[0], KH = k.shape[2], KW = k.shape[3]
    cdef Py_ssize_t HO = out.shape[2], WO = out.shape[3]
    cdef Py_ssize_t n, f, c, u, v, i, j, i0, i1, j0, j1, di, dj
    cdef floating kv
    for n in range(N):
        for f in range(F):
            for c in range(C):
                for u in range(KH):
                    # valid output rows: 0 <= i + u - p < H
                    i0 = _imax(0, p - u)
                    i1 = _imin(HO, H + p - u)
                    di = u - p
                    for v in range(KW):
                        j0 = _imax(0, p - v)
                        j1 = _imin(WO, W + p - v)
                        dj = v - p
                        kv = k[f, c, u, v]
                        for i in range(i0, i1):
                            for j in range(j0, j1):
                                out[n, f, i, j] += kv * x[n, c, i + di, j + dj]


cdef void _conv_bwd(
    floating[:, :, :, ::1] x,
    floating[:, :, :, ::1] k,
    Py_ssize_t p,
    floating[:, :, :, ::1] gout,
    floating[:, :, :, ::1] gx,
    floating[:, :, :, ::1] gk,
) noexcept nogil:
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = k.shape[0], KH = k.shape[2], KW = k.shape[3]
    cdef Py_ssize_t HO = gout.shape[2], WO = gout.shape[3]
    cdef Py_ssize_t n, f, c, u, v, i, j, i0, i1, j0, j1, di, dj
    cdef floating kv, acc0, acc1
    cdef Py_ssize_t span, j_mid
    for n in range(N):
        for f in range(F):
            for c in range(C):
                for u in range(KH):
                    i0 = _imax(0, p - u)
                    i1 = _imin(HO, H + p - u)
                    di = u - p
                    for v in range(KW):
                        j0 = _imax(0, p - v)
                        j1 = _imin(WO, W + p - v)
                        dj = v - p
                        kv = k[f, c, u, v]
                        # two-accumulator reduction for the kernel gradient
                        acc0 = 0
                        acc1 = 0
                        for i in range(i0, i1):
                            span = j1 - j0
                            j_mid = j0 + span - (span & 1)
                            for j in range(j0, j_mid, 2):
                                acc0 += gout[n, f, i, j] * x[n, c, i + di, j + dj]
                                acc1 += gout[n, f, i, j + 1] * x[n, c, i + di, j + 1 + dj]
                            if span & 1:
                                acc0 += gout[n, f, i, j_mid] * x[n, c, i + di, j_mid + dj]
                            for j in range(j0, j1):
                                gx[n, c, i + di, j + dj] += kv * gout[n, f, i, j]
                        gk[f, c, u, v] += acc0 + acc1


cdef void _pool_fwd(
    floating[:, :, :, ::1] x,
    floating[:, :, :, ::1] out,
    unsigned char[:, :, :, ::1] idx,
) noexcept nogil:
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t H2 = out.shape[2], W2 = out.shape[3]
    cdef Py_ssize_t n, c, i, j, u, v, pos
    cdef floating best, val
    cdef unsigned char best_pos
    for n in range(N):
        for c in range(C):
            for i in range(H2):
                for j in range(W2):
                    best = x[n, c, 2 * i, 2 * j]
                    best_pos = 0
                    pos = 0
                    for u in range(2):
                        for v in range(2):
                            if pos > 0:
                                val = x[n, c, 2 * i + u, 2 * j + v]
                                if val > best:
                                    best = val
                                    best_pos = <unsigned char> pos
                            pos += 1
                    out[n, c, i, j] = best
                    idx[n, c, i, j] = best_pos


cdef void _pool_bwd(
    unsigned char[:, :, :, ::1] idx,
    floating[:, :, :, ::1] gout,
    floating[:, :, :, ::1] gx,
) noexcept nogil:
    cdef Py_ssize_t N = gout.shape[0], C = gout.shape[1]
    cdef Py_ssize_t H2 = gout.shape[2], W2 = gout.shape[3]
    cdef Py_ssize_t n, c, i, j
    cdef unsigned char p
    for n in range(N):
        for c in range(C):
            for i in range(H2):
                for j in range(W2):
                    p = idx[n, c, i, j]
                    gx[n, c, 2 * i + (p >> 1), 2 * j + (p & 1)] = gout[n, c, i, j]
