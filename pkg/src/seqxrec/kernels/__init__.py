"""Kernel backend selection.

The compiled extension (``seqxrec.kernels._native``) is preferred when it
imported cleanly; otherwise the numpy fallback is used. Selection happens
once at import time and can be overridden either with the environment
variable ``SEQXREC_PURE_PYTHON=1`` or at runtime via :func:`set_backend`
(used by the parity tests and the benchmark).
"""

from __future__ import annotations

import os

from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import _native

    _BACKENDS["native"] = _native
except ImportError:  # extension not built
    _native = None

if os.environ.get("SEQXREC_PURE_PYTHON"):
    _impl = numpy_backend
else:
    _impl = _native if _native is not None else numpy_backend


def get_backend() -> str:
    return _impl.NAME


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    global _impl
    try:
        _impl = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")


def softmax_fwd(x):
    return _impl.softmax_fwd(x)


def softmax_bwd(y, gy):
    return _impl.softmax_bwd(y, gy)


def layernorm_fwd(x, gain, bias, eps):
    return _impl.layernorm_fwd(x, gain, bias, eps)


def layernorm_bwd(gy, xhat, inv_std, gain):
    return _impl.layernorm_bwd(gy, xhat, inv_std, gain)


def gelu_fwd(x):
    return _impl.gelu_fwd(x)


def gelu_bwd(x, gy):
    return _impl.gelu_bwd(x, gy)


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    return _impl.adam_step(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay)
