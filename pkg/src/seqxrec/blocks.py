"""Transformer building blocks shared by the recommender, the adapters and
the micro language model.

Everything is single-sequence and time-major: activations are (n, d)
tensors. A block can run with additive weight deltas (keyed by its local
parameter names) and with a full-width vector injected into the query/key/
value activations.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import (
    RngState,
    Tensor,
    add,
    dropout,
    gelu,
    layer_norm,
    matmul,
    reshape,
    scale,
    softmax,
    transpose,
)

_MASK_CACHE = {}


def causal_mask(n, dtype):
    """(n, n) additive mask: -1e9 above the diagonal."""
    key = (n, np.dtype(dtype).str)
    mask = _MASK_CACHE.get(key)
    if mask is None:
        mask = Tensor(np.triu(np.full((n, n), -1e9, dtype=dtype), k=1))
        _MASK_CACHE[key] = mask
    return mask


def linear_init(rng: RngState, fan_in, fan_out, dtype):
    return Tensor(rng.normal((fan_in, fan_out), std=1.0 / math.sqrt(fan_in), dtype=dtype))


class TransformerBlock:
    """Pre-norm block: attention + feed-forward, both with residuals."""

    PARAM_NAMES = (
        "wq", "wk", "wv", "wo",
        "ff1", "b1", "ff2", "b2",
        "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
    )

    def __init__(self, params, d, heads):
        if d % heads != 0:
            raise ValueError(f"head count {heads} must divide width {d}")
        self.params = params
        self.d = d
        self.heads = heads

    @classmethod
    def create(cls, d, heads, d_ff, rng, dtype=np.float64):
        p = {
            "wq": linear_init(rng, d, d, dtype),
            "wk": linear_init(rng, d, d, dtype),
            "wv": linear_init(rng, d, d, dtype),
            "wo": linear_init(rng, d, d, dtype),
            "ff1": linear_init(rng, d, d_ff, dtype),
            "b1": Tensor(np.zeros(d_ff, dtype=dtype)),
            "ff2": linear_init(rng, d_ff, d, dtype),
            "b2": Tensor(np.zeros(d, dtype=dtype)),
            "ln1_gain": Tensor(np.ones(d, dtype=dtype)),
            "ln1_bias": Tensor(np.zeros(d, dtype=dtype)),
            "ln2_gain": Tensor(np.ones(d, dtype=dtype)),
            "ln2_bias": Tensor(np.zeros(d, dtype=dtype)),
        }
        return cls(p, d, heads)

    def set_requires_grad(self, flag):
        for p in self.params.values():
            p.requires_grad = flag

    def _weight(self, name, deltas):
        w = self.params[name]
        if deltas and name in deltas:
            return add(w, deltas[name])
        return w

    def forward(self, x, *, causal, deltas=None, inject=None, dropout_p=0.0,
                rng=None, training=False):
        n = x.shape[0]
        h = layer_norm(x, self.params["ln1_gain"], self.params["ln1_bias"])
        q = matmul(h, self._weight("wq", deltas))
        k = matmul(h, self._weight("wk", deltas))
        v = matmul(h, self._weight("wv", deltas))
        if inject is not None:
            offset = reshape(inject, (1, self.d))
            q = add(q, offset)
            k = add(k, offset)
            v = add(v, offset)
        dh = self.d // self.heads
        # (n, d) -> (heads, n, dh)
        q3 = transpose(reshape(q, (n, self.heads, dh)), (1, 0, 2))
        k3 = transpose(reshape(k, (n, self.heads, dh)), (1, 0, 2))
        v3 = transpose(reshape(v, (n, self.heads, dh)), (1, 0, 2))
        scores = scale(matmul(q3, transpose(k3, (0, 2, 1))), 1.0 / math.sqrt(dh))
        if causal:
            scores = add(scores, causal_mask(n, x.dtype))
        att = softmax(scores, axis=-1)
        ctx = matmul(att, v3)
        ctx = reshape(transpose(ctx, (1, 0, 2)), (n, self.d))
        attn_out = matmul(ctx, self._weight("wo", deltas))
        attn_out = dropout(attn_out, dropout_p, rng, training)
        x = add(x, attn_out)

        h2 = layer_norm(x, self.params["ln2_gain"], self.params["ln2_bias"])
        ff = matmul(gelu(add(matmul(h2, self._weight("ff1", deltas)), self.params["b1"])),
                    self._weight("ff2", deltas))
        ff = add(ff, self.params["b2"])
        ff = dropout(ff, dropout_p, rng, training)
        return add(x, ff)


def named_block_params(blocks, prefix=""):
    out = {}
    for l, block in enumerate(blocks):
        for name, p in block.params.items():
            out[f"{prefix}layer{l}.{name}"] = p
    return out
