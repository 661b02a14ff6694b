from .gradcheck import NonFiniteError, grad_check
from .optim import Adam
from .rng import RngState
from .tensor import (
    EmptyPoolError,
    LossNotScalarError,
    ShapeMismatchError,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    cross_entropy,
    dropout,
    gelu,
    layer_norm,
    log,
    matmul,
    mean_pool,
    mul,
    reshape,
    scale,
    sigmoid,
    softmax,
    softplus,
    sub,
    take_rows,
    tmean,
    transpose,
    tsum,
    zero_grads,
)

__all__ = [
    "Adam",
    "EmptyPoolError",
    "LossNotScalarError",
    "NonFiniteError",
    "RngState",
    "ShapeMismatchError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "concat",
    "cross_entropy",
    "dropout",
    "gelu",
    "grad_check",
    "layer_norm",
    "log",
    "matmul",
    "mean_pool",
    "mul",
    "reshape",
    "scale",
    "sigmoid",
    "softmax",
    "softplus",
    "sub",
    "take_rows",
    "tmean",
    "transpose",
    "tsum",
    "zero_grads",
]
