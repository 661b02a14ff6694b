"""Self-attentive sequential recommender: causal transformer over item ids,
scored by inner product against the item embedding table."""

from __future__ import annotations

import math

import numpy as np

from .blocks import TransformerBlock, named_block_params
from .data import truncate_sequence
from .numerics import (
    Adam,
    RngState,
    Tape,
    Tensor,
    add,
    backward,
    layer_norm,
    mul,
    softplus,
    take_rows,
    tmean,
    tsum,
    scale,
)


class IdOutOfRangeError(ValueError):
    pass


class SeqRecModel:
    """Item/positional embeddings plus causal transformer layers.

    Row 0 of the item table is reserved for padding and is never referenced
    by a valid sequence.
    """

    def __init__(self, num_items, d=64, layers=2, heads=4, max_len=50,
                 dropout=0.2, seed=0, dtype=np.float32):
        self.num_items = num_items
        self.d = d
        self.heads = heads
        self.max_len = max_len
        self.dropout = dropout
        rng = RngState(seed).spawn("seqrec-init")
        self.item_emb = Tensor(rng.normal((num_items + 1, d), std=1.0 / math.sqrt(d), dtype=dtype))
        self.item_emb.data[0] = 0.0
        self.pos_emb = Tensor(rng.normal((max_len, d), std=1.0 / math.sqrt(d), dtype=dtype))
        self.blocks = [TransformerBlock.create(d, heads, 4 * d, rng, dtype) for _ in range(layers)]
        self.final_gain = Tensor(np.ones(d, dtype=dtype))
        self.final_bias = Tensor(np.zeros(d, dtype=dtype))
        self.set_requires_grad(True)

    def named_parameters(self):
        params = {"item_emb": self.item_emb, "pos_emb": self.pos_emb}
        params.update(named_block_params(self.blocks))
        params["final.ln_gain"] = self.final_gain
        params["final.ln_bias"] = self.final_bias
        return params

    def set_requires_grad(self, flag):
        for p in self.named_parameters().values():
            p.requires_grad = flag

    def delta_target_shapes(self, targets=("ff1", "ff2")):
        """Shapes of the per-layer tensors a hypernetwork may perturb."""
        out = {}
        for l, block in enumerate(self.blocks):
            for short in targets:
                out[f"layer{l}.{short}"] = block.params[short].shape
        return out

    def encode_sequence(self, items, deltas=None, training=False, rng=None):
        """Hidden states (n, d); row t is the state after the prefix up to t.

        ``deltas`` maps "layer{l}.{name}" to additive weight perturbations.
        """
        n = len(items)
        if not 1 <= n <= self.max_len:
            raise IdOutOfRangeError(f"sequence length {n} outside [1, {self.max_len}]")
        ids = np.asarray(items, dtype=np.int64)
        if ids.min() < 1 or ids.max() > self.num_items:
            raise IdOutOfRangeError(
                f"item ids must lie in [1, {self.num_items}], got range [{ids.min()}, {ids.max()}]"
            )
        x = add(take_rows(self.item_emb, ids), take_rows(self.pos_emb, np.arange(n)))
        for l, block in enumerate(self.blocks):
            block_deltas = None
            if deltas:
                prefix = f"layer{l}."
                block_deltas = {k[len(prefix):]: v for k, v in deltas.items() if k.startswith(prefix)}
            x = block.forward(
                x,
                causal=True,
                deltas=block_deltas,
                dropout_p=self.dropout,
                rng=rng,
                training=training,
            )
        return layer_norm(x, self.final_gain, self.final_bias)

    def user_state(self, items, deltas=None):
        """Scoring representation: the hidden state of the last position."""
        enc = self.encode_sequence(items, deltas=deltas)
        return take_rows(enc, [enc.shape[0] - 1])

    def score_items(self, user_state, candidate_ids):
        """Dot-product relevance scores; pure numpy (evaluation path)."""
        state = user_state.data if isinstance(user_state, Tensor) else np.asarray(user_state)
        state = state.reshape(-1)
        if not np.isfinite(state).all():
            raise ValueError("user state must be finite")
        ids = np.asarray(candidate_ids, dtype=np.int64)
        return self.item_emb.data[ids] @ state


def sample_negative(rng, num_items, forbidden):
    """Uniform item id outside ``forbidden``; rejection sampling."""
    while True:
        neg = int(rng.integers(1, num_items + 1))
        if neg not in forbidden:
            return neg


def bpr_loss_for_sequence(model, items, negatives, training=True, rng=None):
    """Next-item BPR over every prefix position of one sequence.

    items: dense ids [i_1..i_m]; position t scores i_{t+1} against
    negatives[t]. Returns the mean of -log sigmoid(pos - neg).
    """
    enc = model.encode_sequence(items[:-1], training=training, rng=rng)
    pos = take_rows(model.item_emb, np.asarray(items[1:], dtype=np.int64))
    neg = take_rows(model.item_emb, np.asarray(negatives, dtype=np.int64))
    pos_scores = tsum(mul(enc, pos), axis=1)
    neg_scores = tsum(mul(enc, neg), axis=1)
    margin = add(pos_scores, scale(neg_scores, -1.0))
    return tmean(softplus(scale(margin, -1.0)))


def pretrain(model, split, epochs, lr, weight_decay, seed, max_len=None):
    """BPR pretraining over the training split; returns per-epoch mean loss."""
    max_len = max_len or model.max_len
    rng = RngState(seed).spawn("pretrain-rec")
    users = sorted(u for u, s in split.train.items() if len(s) >= 2)
    if not users:
        raise ValueError("training split has no user with two or more interactions")
    user_items = {}
    user_sets = {}
    for u in users:
        frag = truncate_sequence(split.train[u], max_len)
        user_items[u] = split.dense_ids(frag.items)
        user_sets[u] = set(split.dense_ids(split.train[u].items))
    opt = Adam(model.named_parameters(), lr=lr, weight_decay=weight_decay)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(users))
        total = 0.0
        for idx in order:
            u = users[int(idx)]
            items = user_items[u]
            negs = [sample_negative(rng, model.num_items, user_sets[u]) for _ in items[1:]]
            opt.zero_grads()
            with Tape() as tape:
                loss = bpr_loss_for_sequence(model, items, negs, training=True, rng=rng)
            backward(tape, loss)
            opt.step()
            total += loss.item()
        curve.append(total / len(users))
    return curve
