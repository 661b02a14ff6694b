# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see numpy_backend for the contract).

Loops are written row-wise over contiguous buffers; float32 and float64 are
both supported through a fused type so the 64-bit gradient-check mode runs
the same code path as training.
"""

import numpy as np

from libc.math cimport erf, exp, sqrt

NAME = "native"

ctypedef fused real:
    float
    double

cdef double _INV_SQRT2 = 0.7071067811865476
cdef double _INV_SQRT2PI = 0.3989422804014327


cdef inline object _empty_like2(real[:, ::1] x, Py_ssize_t rows, Py_ssize_t cols):
    if real is float:
        return np.empty((rows, cols), dtype=np.float32)
    else:
        return np.empty((rows, cols), dtype=np.float64)


def softmax_fwd(real[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    out_arr = _empty_like2(x, rows, cols)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, total, e
    for i in range(rows):
        mx = x[i, 0]
        for j in range(1, cols):
            if x[i, j] > mx:
                mx = x[i, j]
        total = 0.0
        for j in range(cols):
            e = exp(<double> x[i, j] - mx)
            out[i, j] = <real> e
            total += e
        for j in range(cols):
            out[i, j] = <real> (out[i, j] / total)
    return out_arr


def softmax_bwd(real[:, ::1] y, real[:, ::1] gy):
    cdef Py_ssize_t rows = y.shape[0], cols = y.shape[1]
    out_arr = _empty_like2(y, rows, cols)
    cdef real[:, ::1] gx = out_arr
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += <double> gy[i, j] * <double> y[i, j]
        for j in range(cols):
            gx[i, j] = <real> (<double> y[i, j] * (<double> gy[i, j] - dot))
    return out_arr


def layernorm_fwd(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    out_arr = _empty_like2(x, rows, cols)
    xhat_arr = _empty_like2(x, rows, cols)
    if real is float:
        inv_std_arr = np.empty(rows, dtype=np.float32)
    else:
        inv_std_arr = np.empty(rows, dtype=np.float64)
    cdef real[:, ::1] out = out_arr
    cdef real[:, ::1] xhat = xhat_arr
    cdef real[::1] inv_std = inv_std_arr
    cdef Py_ssize_t i, j
    cdef double mean, var, c, istd
    for i in range(rows):
        mean = 0.0
        for j in range(cols):
            mean += <double> x[i, j]
        mean /= cols
        var = 0.0
        for j in range(cols):
            c = <double> x[i, j] - mean
            var += c * c
        var /= cols
        istd = 1.0 / sqrt(var + eps)
        inv_std[i] = <real> istd
        for j in range(cols):
            c = (<double> x[i, j] - mean) * istd
            xhat[i, j] = <real> c
            out[i, j] = <real> (<double> gain[j] * c + <double> bias[j])
    return out_arr, xhat_arr, inv_std_arr


def layernorm_bwd(real[:, ::1] gy, real[:, ::1] xhat, real[::1] inv_std,
                  real[::1] gain):
    cdef Py_ssize_t rows = gy.shape[0], cols = gy.shape[1]
    gx_arr = _empty_like2(gy, rows, cols)
    if real is float:
        ggain_arr = np.zeros(cols, dtype=np.float32)
        gbias_arr = np.zeros(cols, dtype=np.float32)
    else:
        ggain_arr = np.zeros(cols, dtype=np.float64)
        gbias_arr = np.zeros(cols, dtype=np.float64)
    cdef real[:, ::1] gx = gx_arr
    cdef real[::1] ggain = ggain_arr
    cdef real[::1] gbias = gbias_arr
    cdef Py_ssize_t i, j
    cdef double s1, s2, gh, istd
    for i in range(rows):
        s1 = 0.0
        s2 = 0.0
        for j in range(cols):
            gh = <double> gy[i, j] * <double> gain[j]
            s1 += gh
            s2 += gh * <double> xhat[i, j]
            ggain[j] = <real> (<double> ggain[j] + <double> gy[i, j] * <double> xhat[i, j])
            gbias[j] = <real> (<double> gbias[j] + <double> gy[i, j])
        istd = <double> inv_std[i]
        for j in range(cols):
            gh = <double> gy[i, j] * <double> gain[j]
            gx[i, j] = <real> ((istd / cols) * (cols * gh - s1 - <double> xhat[i, j] * s2))
    return gx_arr, ggain_arr, gbias_arr


def gelu_fwd(real[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    if real is float:
        out_arr = np.empty(n, dtype=np.float32)
    else:
        out_arr = np.empty(n, dtype=np.float64)
    cdef real[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = <double> x[i]
        out[i] = <real> (0.5 * v * (1.0 + erf(v * _INV_SQRT2)))
    return out_arr


def gelu_bwd(real[::1] x, real[::1] gy):
    cdef Py_ssize_t n = x.shape[0]
    if real is float:
        out_arr = np.empty(n, dtype=np.float32)
    else:
        out_arr = np.empty(n, dtype=np.float64)
    cdef real[::1] gx = out_arr
    cdef Py_ssize_t i
    cdef double v, cdf, pdf
    for i in range(n):
        v = <double> x[i]
        cdf = 0.5 * (1.0 + erf(v * _INV_SQRT2))
        pdf = _INV_SQRT2PI * exp(-0.5 * v * v)
        gx[i] = <real> (<double> gy[i] * (cdf + v * pdf))
    return out_arr


def adam_step(real[::1] p, real[::1] g, real[::1] m, real[::1] v, long t,
              double lr, double beta1, double beta2, double eps,
              double weight_decay):
    cdef Py_ssize_t n = p.shape[0]
    cdef double bc1 = 1.0 - beta1**t
    cdef double bc2 = 1.0 - beta2**t
    cdef Py_ssize_t i
    cdef double gi, mi, vi
    for i in range(n):
        gi = <double> g[i]
        if weight_decay != 0.0:
            gi += weight_decay * <double> p[i]
        mi = beta1 * <double> m[i] + (1.0 - beta1) * gi
        vi = beta2 * <double> v[i] + (1.0 - beta2) * gi * gi
        m[i] = <real> mi
        v[i] = <real> vi
        p[i] = <real> (<double> p[i] - lr * (mi / bc1) / (sqrt(vi / bc2) + eps))
