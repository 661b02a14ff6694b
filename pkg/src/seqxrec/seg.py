"""Explanation generator: a micro decoder-only LM whose prompt carries two
adapted sequence embeddings (behavioral + semantic), with the same pair also
injected additively into every attention block's query/key/value activations.

The LM backbone stays frozen; training moves only the adapters and the two
projection maps that bridge adapter output width to LM width.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .blocks import TransformerBlock, named_block_params
from .moeadapter import MoEAdapter
from .numerics import (
    Adam,
    RngState,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    cross_entropy,
    layer_norm,
    matmul,
    reshape,
    scale,
    take_rows,
    transpose,
)
from .textembed import build_vocab


class ContextOverflowError(ValueError):
    pass


class EmptyTargetError(ValueError):
    pass


def default_system_prompt():
    return resources.files("seqxrec.templates").joinpath("system_prompt.txt").read_text(
        encoding="utf-8"
    ).strip()


class MicroLM:
    """Decoder-only transformer with the output projection tied to the token
    table. All backbone parameters are created frozen."""

    def __init__(self, vocab, d=128, layers=4, heads=4, ctx=256, seed=0, dtype=np.float32):
        self.vocab = vocab
        self.d = d
        self.ctx = ctx
        rng = RngState(seed).spawn("lm-init")
        # 1/sqrt(d) keeps the tied readout expressive: unit-norm rows give
        # the layer-normed hidden state a usable logit range
        self.tok_emb = Tensor(rng.normal((len(vocab), d), std=1.0 / math.sqrt(d), dtype=dtype))
        self.pos_emb = Tensor(rng.normal((ctx, d), std=1.0 / math.sqrt(d), dtype=dtype))
        self.blocks = [TransformerBlock.create(d, heads, 4 * d, rng, dtype) for _ in range(layers)]
        self.final_gain = Tensor(np.ones(d, dtype=dtype))
        self.final_bias = Tensor(np.zeros(d, dtype=dtype))
        for p in self.named_parameters().values():
            p.requires_grad = False

    @property
    def num_layers(self):
        return len(self.blocks)

    def named_parameters(self):
        params = {"tok_emb": self.tok_emb, "pos_emb": self.pos_emb}
        params.update(named_block_params(self.blocks))
        params["final.ln_gain"] = self.final_gain
        params["final.ln_bias"] = self.final_bias
        return params

    def backbone_hash(self):
        digest = hashlib.sha256()
        for name, p in sorted(self.named_parameters().items()):
            digest.update(name.encode())
            digest.update(p.data.tobytes())
        return digest.hexdigest()

    def forward_rows(self, rows, inject=None, inject_blocks=None):
        """Causal forward over pre-embedded rows (n, d).

        ``inject`` is a full-width vector added to Q, K and V of every block
        whose entry in ``inject_blocks`` is true (all blocks by default).
        """
        n = rows.shape[0]
        if n > self.ctx:
            raise ContextOverflowError(f"{n} positions exceed context {self.ctx}")
        x = add(rows, take_rows(self.pos_emb, np.arange(n)))
        for l, block in enumerate(self.blocks):
            enabled = inject is not None and (inject_blocks is None or inject_blocks[l])
            x = block.forward(x, causal=True, inject=inject if enabled else None)
        return layer_norm(x, self.final_gain, self.final_bias)

    def logits(self, hidden):
        return matmul(hidden, transpose(self.tok_emb))


@dataclass
class PromptAssembly:
    rows: Tensor  # (n, d) embedding matrix, positional encoding not yet added
    sys_len: int
    slot_positions: tuple
    cat_len: int
    target_ids: list  # training targets, eos included; empty at generation

    @property
    def prompt_len(self):
        return self.sys_len + 2 + self.cat_len

    @property
    def total_len(self):
        return self.prompt_len + len(self.target_ids)


class SEG:
    """Bundles the frozen LM, the two MoE adapters and the projection maps."""

    def __init__(self, lm, rec_model, encoder, experts=8, moe_dropout=0.2,
                 moe_heads=4, seed=0, dtype=np.float32, system_prompt=None,
                 inject_blocks=None):
        self.lm = lm
        self.rec_model = rec_model
        self.encoder = encoder
        self.system_prompt = system_prompt if system_prompt is not None else default_system_prompt()
        self.sys_ids = [i for i in lm.vocab.encode(self.system_prompt) if i != lm.vocab.unk_id]
        self.inject_blocks = list(inject_blocks) if inject_blocks is not None else [True] * lm.num_layers
        rec_model.set_requires_grad(False)
        rng = RngState(seed).spawn("seg-init")
        max_len = rec_model.max_len
        self.adapter_rec = MoEAdapter(
            rec_model.d, lm.d, experts=experts, heads=moe_heads, max_len=max_len,
            dropout=moe_dropout, seed=rng.spawn("adapter-rec").seed, dtype=dtype,
        )
        self.adapter_sem = MoEAdapter(
            encoder.dim, lm.d, experts=experts, heads=moe_heads, max_len=max_len,
            dropout=moe_dropout, seed=rng.spawn("adapter-sem").seed, dtype=dtype,
        )
        proj_rng = rng.spawn("projectors")
        self.proj_rec = Tensor(
            proj_rng.normal((lm.d, lm.d), std=1.0 / math.sqrt(lm.d), dtype=dtype), requires_grad=True
        )
        self.proj_sem = Tensor(
            proj_rng.normal((lm.d, lm.d), std=1.0 / math.sqrt(lm.d), dtype=dtype), requires_grad=True
        )

    def trainable_parameters(self):
        params = {}
        for name, p in self.adapter_rec.named_parameters().items():
            params[f"adapter.rec.{name}"] = p
        for name, p in self.adapter_sem.named_parameters().items():
            params[f"adapter.sem.{name}"] = p
        params["projector.rec.w"] = self.proj_rec
        params["projector.sem.w"] = self.proj_sem
        return params

    def named_parameters(self):
        params = {f"lm.{k}": v for k, v in self.lm.named_parameters().items()}
        params.update(self.trainable_parameters())
        return params

    def set_trainable(self, flag):
        for p in self.trainable_parameters().values():
            p.requires_grad = flag

    def adapted_pair(self, dense_ids, descriptions, training=False, rng=None, ablation=None):
        """MoE-adapted behavioral/semantic embeddings for one user sequence.

        ablation: no_be zeroes the behavioral path, no_se the semantic path,
        no_de both; no_ct is handled by the caller (category text omission).
        """
        zero = Tensor(np.zeros(self.lm.d, dtype=self.lm.tok_emb.dtype))
        if ablation in ("no_be", "no_de"):
            e_rec = zero
        else:
            rec_seq = self.rec_model.encode_sequence(dense_ids).detach()
            e_rec = self.adapter_rec.forward(rec_seq, training=training, rng=rng)
        if ablation in ("no_se", "no_de"):
            e_sem = zero
        else:
            sem_seq = Tensor(self.encoder.embed_sequence(descriptions).astype(self.lm.tok_emb.dtype))
            e_sem = self.adapter_sem.forward(sem_seq, training=training, rng=rng)
        return e_rec, e_sem

    def project_pair(self, e_rec, e_sem):
        p_rec = matmul(reshape(e_rec, (1, self.lm.d)), self.proj_rec)
        p_sem = matmul(reshape(e_sem, (1, self.lm.d)), self.proj_sem)
        return p_rec, p_sem

    def encode_cat_ids(self, cat_texts, reserve):
        """Category words as token ids, newest kept when space runs out."""
        ids = [i for i in self.lm.vocab.encode(" ".join(cat_texts)) if i != self.lm.vocab.unk_id]
        budget = self.lm.ctx - self.sys_len - 2 - reserve
        if budget < 0:
            raise ContextOverflowError("system prompt and slots alone exceed the context")
        return ids[-budget:] if len(ids) > budget else ids

    @property
    def sys_len(self):
        return len(self.sys_ids)

    def assemble_input(self, p_rec, p_sem, cat_ids, target_ids=None) -> PromptAssembly:
        """Embedding rows: [system tokens; slot rec; slot sem; category
        tokens; target tokens] with an eos appended to the target."""
        target_ids = list(target_ids) if target_ids else []
        pieces = [take_rows(self.lm.tok_emb, self.sys_ids), p_rec, p_sem]
        if cat_ids:
            pieces.append(take_rows(self.lm.tok_emb, cat_ids))
        if target_ids:
            pieces.append(take_rows(self.lm.tok_emb, target_ids))
        rows = concat(pieces, axis=0)
        assembly = PromptAssembly(
            rows=rows,
            sys_len=self.sys_len,
            slot_positions=(self.sys_len, self.sys_len + 1),
            cat_len=len(cat_ids),
            target_ids=target_ids,
        )
        if assembly.total_len > self.lm.ctx:
            raise ContextOverflowError(
                f"assembly of {assembly.total_len} rows exceeds context {self.lm.ctx}"
            )
        return assembly

    def example_loss(self, dense_ids, descriptions, cat_texts, target_text,
                     training=False, rng=None, ablation=None):
        """Teacher-forced mean NLL of the target explanation tokens."""
        target_ids = self.lm.vocab.encode(target_text)
        if not target_ids:
            raise EmptyTargetError(f"target explanation {target_text!r} has no tokens")
        target_ids = target_ids + [self.lm.vocab.eos_id]
        e_rec, e_sem = self.adapted_pair(dense_ids, descriptions, training=training, rng=rng,
                                         ablation=ablation)
        p_rec, p_sem = self.project_pair(e_rec, e_sem)
        cat_ids = [] if ablation == "no_ct" else self.encode_cat_ids(cat_texts, len(target_ids))
        assembly = self.assemble_input(p_rec, p_sem, cat_ids, target_ids)
        inject = reshape(add(p_rec, p_sem), (self.lm.d,))
        hidden = self.lm.forward_rows(assembly.rows, inject=inject, inject_blocks=self.inject_blocks)
        start = assembly.prompt_len - 1
        positions = np.arange(start, start + len(target_ids))
        logits = self.lm.logits(take_rows(hidden, positions))
        return cross_entropy(logits, target_ids)

    def generate(self, dense_ids, descriptions, cat_texts, max_tokens=32, ablation=None):
        """Greedy decoding until eos or the token budget; returns plain text."""
        if max_tokens <= 0:
            return ""
        e_rec, e_sem = self.adapted_pair(dense_ids, descriptions, ablation=ablation)
        p_rec, p_sem = self.project_pair(e_rec, e_sem)
        cat_ids = [] if ablation == "no_ct" else self.encode_cat_ids(cat_texts, max_tokens)
        assembly = self.assemble_input(p_rec, p_sem, cat_ids)
        inject = reshape(add(p_rec, p_sem), (self.lm.d,))
        rows = assembly.rows
        out_ids = []
        for _ in range(max_tokens):
            hidden = self.lm.forward_rows(rows, inject=inject, inject_blocks=self.inject_blocks)
            last = self.lm.logits(take_rows(hidden, [rows.shape[0] - 1]))
            next_id = int(np.argmax(last.data[0]))
            if next_id == self.lm.vocab.eos_id:
                break
            out_ids.append(next_id)
            rows = concat([rows, take_rows(self.lm.tok_emb, [next_id])], axis=0)
        return self.lm.vocab.decode(out_ids)


def build_lm_vocab(gt_records, cat_text_lists, system_prompt=None, min_freq=1):
    corpus = [system_prompt or default_system_prompt()]
    corpus += [rec.text for rec in gt_records.values()]
    corpus += [" ".join(cats) for cats in cat_text_lists if cats]
    return build_vocab(corpus, min_freq=min_freq)


def train_seg(seg, examples, epochs, lr, batch_size, weight_decay, seed):
    """Optimize adapters + projectors on (ids, descriptions, cats, target)
    examples; the LM backbone is untouched. Returns per-epoch mean loss."""
    if not examples:
        raise ValueError("no training examples")
    rng = RngState(seed).spawn("train-seg")
    opt = Adam(seg.trainable_parameters(), lr=lr, weight_decay=weight_decay)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        for chunk_start in range(0, len(order), batch_size):
            chunk = order[chunk_start : chunk_start + batch_size]
            opt.zero_grads()
            with Tape() as tape:
                losses = []
                for idx in chunk:
                    ids, descriptions, cats, target = examples[int(idx)]
                    losses.append(
                        seg.example_loss(ids, descriptions, cats, target, training=True, rng=rng)
                    )
                batch_loss = scale(_sum_scalars(losses), 1.0 / len(losses))
            backward(tape, batch_loss)
            opt.step()
            total += batch_loss.item() * len(chunk)
        curve.append(total / len(examples))
    return curve


def _sum_scalars(tensors):
    acc = tensors[0]
    for t in tensors[1:]:
        acc = add(acc, t)
    return acc
