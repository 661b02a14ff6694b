import numpy as np
import pytest

from seqxrec.numerics import NonFiniteError, RngState, Tensor, grad_check, log, mul, scale, tsum


def test_sum_of_squares_is_nearly_exact():
    x = Tensor(RngState(1).normal(12), requires_grad=True)
    err = grad_check(lambda: tsum(mul(x, x)), [x], eps=1e-5)
    assert err < 1e-9


def test_constant_function_reports_zero_error():
    x = Tensor(np.ones(5), requires_grad=True)
    c = Tensor(np.array(2.0))
    err = grad_check(lambda: scale(c, 3.0), [x], eps=1e-6)
    assert err == 0.0


def test_invalid_eps_rejected():
    x = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: tsum(x), [x], eps=0.0)
    with pytest.raises(ValueError):
        grad_check(lambda: tsum(x), [x], eps=0.5)


def test_non_finite_loss_raises():
    x = Tensor(np.array([-1.0]), requires_grad=True)
    with np.errstate(invalid="ignore"):
        with pytest.raises(NonFiniteError):
            grad_check(lambda: tsum(log(x)), [x], eps=1e-6)
