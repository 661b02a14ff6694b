"""Pure-numpy implementations of the hot kernels.

Shapes follow one convention: 2-d inputs are (rows, features) and the kernel
acts on the last axis. ``adam_step`` mutates its parameter/state buffers
in place; everything else is functional.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

NAME = "numpy"

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


def softmax_fwd(x):
    y = x - x.max(axis=-1, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=-1, keepdims=True)
    return y


def softmax_bwd(y, gy):
    dot = (gy * y).sum(axis=-1, keepdims=True)
    return y * (gy - dot)


def layernorm_fwd(x, gain, bias, eps):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    return gain * xhat + bias, xhat, inv_std[..., 0]


def layernorm_bwd(gy, xhat, inv_std, gain):
    n = xhat.shape[-1]
    gxhat = gy * gain
    s1 = gxhat.sum(axis=-1, keepdims=True)
    s2 = (gxhat * xhat).sum(axis=-1, keepdims=True)
    gx = (inv_std[..., None] / n) * (n * gxhat - s1 - xhat * s2)
    ggain = (gy * xhat).reshape(-1, n).sum(axis=0)
    gbias = gy.reshape(-1, n).sum(axis=0)
    return gx, ggain, gbias


def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_bwd(x, gy):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return gy * (cdf + x * pdf)


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    if weight_decay != 0.0:
        g = g + weight_decay * p
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
