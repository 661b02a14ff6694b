"""Central-difference verification of tape gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, backward, zero_grads


class NonFiniteError(ArithmeticError):
    pass


def grad_check(f, params, eps=1e-6):
    """Compare tape gradients of ``f()`` against central differences.

    ``f`` must be a deterministic scalar-valued closure over ``params``.
    Returns the maximum over all parameter entries of
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")

    zero_grads(params)
    with Tape() as tape:
        loss = f()
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss is not finite")
    backward(tape, loss)

    analytic = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NonFiniteError("analytic gradient is not finite")
        analytic.append(g.copy())
    zero_grads(params)

    def eval_loss():
        value = float(f().data)
        if not np.isfinite(value):
            raise NonFiniteError("loss is not finite at a perturbed point")
        return value

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = eval_loss()
            flat[i] = orig - eps
            lo = eval_loss()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
