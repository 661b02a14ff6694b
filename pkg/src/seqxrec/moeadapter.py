"""Gate-weighted mixtures of feed-forward experts over pooled sequence
encodings; one adapter per path (behavioral / semantic), no shared state."""

from __future__ import annotations

import math

import numpy as np

from .blocks import TransformerBlock, linear_init, named_block_params
from .numerics import (
    RngState,
    Tensor,
    add,
    concat,
    gelu,
    layer_norm,
    matmul,
    mean_pool,
    reshape,
    softmax,
    take_rows,
)


class MoEAdapter:
    """LayerNorm -> bidirectional fusion encoder -> mean pool -> expert mix."""

    def __init__(self, d_in, d_out, experts=8, fusion_layers=2, heads=4,
                 max_len=50, dropout=0.2, seed=0, dtype=np.float32):
        if experts < 1:
            raise ValueError("need at least one expert")
        self.d_in = d_in
        self.d_out = d_out
        self.num_experts = experts
        self.dropout = dropout
        self.max_len = max_len
        rng = RngState(seed).spawn("moe-init")
        self.pre_gain = Tensor(np.ones(d_in, dtype=dtype))
        self.pre_bias = Tensor(np.zeros(d_in, dtype=dtype))
        self.pos_emb = Tensor(rng.normal((max_len, d_in), std=1.0 / math.sqrt(d_in), dtype=dtype))
        self.fusion = [TransformerBlock.create(d_in, heads, 4 * d_in, rng, dtype) for _ in range(fusion_layers)]
        # near-zero gate logits at init: routing starts (almost) uniform
        self.gate_w = Tensor(rng.normal((d_in, experts), std=0.01, dtype=dtype))
        self.gate_b = Tensor(np.zeros(experts, dtype=dtype))
        d_hidden = 4 * d_in
        self.experts = []
        for _ in range(experts):
            # conservative input-layer scale: the pooled fusion vector is not
            # normalized, so 1/(4 sqrt(d)) keeps every hidden unit in the
            # responsive region of the activation at init
            self.experts.append(
                {
                    "w1": Tensor(rng.normal((d_in, d_hidden), std=0.25 / math.sqrt(d_in), dtype=dtype)),
                    "b1": Tensor(np.zeros(d_hidden, dtype=dtype)),
                    "w2": linear_init(rng, d_hidden, d_out, dtype),
                    "b2": Tensor(np.zeros(d_out, dtype=dtype)),
                }
            )
        self.set_requires_grad(True)

    def named_parameters(self):
        params = {"pre.ln_gain": self.pre_gain, "pre.ln_bias": self.pre_bias, "pos_emb": self.pos_emb}
        params.update(named_block_params(self.fusion, prefix="fusion."))
        params["gate.w"] = self.gate_w
        params["gate.b"] = self.gate_b
        for i, ex in enumerate(self.experts):
            for k, p in ex.items():
                params[f"expert{i}.{k}"] = p
        return params

    def set_requires_grad(self, flag):
        for p in self.named_parameters().values():
            p.requires_grad = flag

    def fuse(self, seq, training=False, rng=None):
        """Bidirectional encoding of an (n, d_in) sequence; shape-preserving."""
        n = seq.shape[0]
        if n > self.max_len:
            raise ValueError(f"sequence length {n} exceeds adapter max_len {self.max_len}")
        x = layer_norm(seq, self.pre_gain, self.pre_bias)
        x = add(x, take_rows(self.pos_emb, np.arange(n)))
        for block in self.fusion:
            x = block.forward(x, causal=False, dropout_p=self.dropout, rng=rng, training=training)
        return x

    def gate(self, h):
        """Softmax expert weights for a pooled vector h (d_in,)."""
        logits = add(matmul(reshape(h, (1, self.d_in)), self.gate_w), self.gate_b)
        return reshape(softmax(logits, axis=-1), (self.num_experts,))

    def expert_outputs(self, h):
        """All expert outputs stacked as (experts, d_out)."""
        row = reshape(h, (1, self.d_in))
        outs = []
        for ex in self.experts:
            hidden = gelu(add(matmul(row, ex["w1"]), ex["b1"]))
            outs.append(add(matmul(hidden, ex["w2"]), ex["b2"]))
        return concat(outs, axis=0)

    def adapt(self, h):
        """Gate-weighted convex combination of the expert outputs."""
        weights = self.gate(h)
        stacked = self.expert_outputs(h)
        return reshape(matmul(reshape(weights, (1, self.num_experts)), stacked), (self.d_out,))

    def forward(self, seq, training=False, rng=None):
        pooled = mean_pool(self.fuse(seq, training=training, rng=rng))
        return self.adapt(pooled)
