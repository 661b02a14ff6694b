"""Parity between the compiled kernel core and the numpy fallback."""

import numpy as np
import pytest

from seqxrec import kernels
from seqxrec.kernels import numpy_backend
from seqxrec.numerics import RngState

native = pytest.importorskip("seqxrec.kernels._native")

DTYPES = [np.float64, np.float32]


def _tol(dtype):
    return 1e-12 if dtype == np.float64 else 1e-5


@pytest.mark.parametrize("dtype", DTYPES)
def test_softmax_parity(dtype):
    x = np.ascontiguousarray(RngState(1).normal((17, 23)).astype(dtype) * 5)
    a = native.softmax_fwd(x)
    b = numpy_backend.softmax_fwd(x)
    np.testing.assert_allclose(a, b, atol=_tol(dtype))
    gy = np.ascontiguousarray(RngState(2).normal((17, 23)).astype(dtype))
    np.testing.assert_allclose(
        native.softmax_bwd(np.ascontiguousarray(a), gy),
        numpy_backend.softmax_bwd(b, gy),
        atol=_tol(dtype),
    )


@pytest.mark.parametrize("dtype", DTYPES)
def test_layernorm_parity(dtype):
    rng = RngState(3)
    x = np.ascontiguousarray(rng.normal((11, 19)).astype(dtype))
    gain = np.ascontiguousarray(rng.normal(19).astype(dtype))
    bias = np.ascontiguousarray(rng.normal(19).astype(dtype))
    ya, xha, isa = native.layernorm_fwd(x, gain, bias, 1e-5)
    yb, xhb, isb = numpy_backend.layernorm_fwd(x, gain, bias, 1e-5)
    np.testing.assert_allclose(ya, yb, atol=_tol(dtype) * 10)
    gy = np.ascontiguousarray(rng.normal((11, 19)).astype(dtype))
    ga = native.layernorm_bwd(gy, np.ascontiguousarray(xha), np.ascontiguousarray(isa), gain)
    gb = numpy_backend.layernorm_bwd(gy, xhb, isb, gain)
    for u, v in zip(ga, gb):
        np.testing.assert_allclose(u, v, atol=_tol(dtype) * 100)


@pytest.mark.parametrize("dtype", DTYPES)
def test_gelu_parity(dtype):
    x = np.ascontiguousarray(RngState(4).normal(503).astype(dtype) * 3)
    np.testing.assert_allclose(native.gelu_fwd(x), numpy_backend.gelu_fwd(x), atol=_tol(dtype))
    gy = np.ascontiguousarray(RngState(5).normal(503).astype(dtype))
    np.testing.assert_allclose(native.gelu_bwd(x, gy), numpy_backend.gelu_bwd(x, gy), atol=_tol(dtype))


@pytest.mark.parametrize("dtype", DTYPES)
def test_adam_parity(dtype):
    rng = RngState(6)

    def run(impl):
        p = np.ascontiguousarray(rng_copy["p"].astype(dtype))
        g = np.ascontiguousarray(rng_copy["g"].astype(dtype))
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        for t in range(1, 6):
            impl.adam_step(p, g, m, v, t, 1e-3, 0.9, 0.999, 1e-8, 0.01)
        return p

    rng_copy = {"p": rng.normal(97), "g": rng.normal(97)}
    np.testing.assert_allclose(run(native), run(numpy_backend), atol=_tol(dtype) * 100)


def test_backend_switching():
    original = kernels.get_backend()
    try:
        kernels.set_backend("numpy")
        assert kernels.get_backend() == "numpy"
        kernels.set_backend("native")
        assert kernels.get_backend() == "native"
        with pytest.raises(ValueError):
            kernels.set_backend("fortran")
    finally:
        kernels.set_backend(original)


def test_default_backend_prefers_native():
    assert "native" in kernels.available_backends()
    assert kernels.get_backend() == "native"
