"""Explanation-conditioned recommender and the utility-evaluation protocol.

A hypernetwork maps an explanation embedding to additive weight deltas for
selected recommender tensors (the per-layer feed-forward weights by
default). Evaluation scores each held-out target from the pre-target
history only, under one of four explanation conditions: generated,
ground_truth, random or empty.
"""

from __future__ import annotations

import math

import numpy as np

from .data import truncate_sequence
from .groundtruth import protocol_pairs
from .metrics import ndcg_at_k, ranked_list, recall_at_k
from .numerics import (
    Adam,
    RngState,
    Tape,
    Tensor,
    add,
    backward,
    gelu,
    matmul,
    mul,
    reshape,
    scale,
    softplus,
    take_rows,
    tsum,
)

CONDITIONS = ("generated", "ground_truth", "random", "empty")


class MissingExplanationError(ValueError):
    pass


class CoverageError(ValueError):
    pass


class LeakageError(AssertionError):
    pass


class Hypernetwork:
    """Per-target two-layer maps from explanation embedding to weight deltas.

    The output layer is zero-initialized and scaled by ``output_scale``, so
    an untrained hypernetwork leaves the base model exactly unchanged.
    """

    def __init__(self, d_explain, target_shapes, hidden=64, output_scale=0.1,
                 seed=0, dtype=np.float32):
        self.d_explain = d_explain
        self.target_shapes = dict(target_shapes)
        self.output_scale = output_scale
        rng = RngState(seed).spawn("hypernet-init")
        self.maps = {}
        for name, shape in self.target_shapes.items():
            size = int(np.prod(shape))
            self.maps[name] = {
                "w1": Tensor(rng.normal((d_explain, hidden), std=1.0 / math.sqrt(d_explain), dtype=dtype),
                             requires_grad=True),
                "b1": Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True),
                "w2": Tensor(np.zeros((hidden, size), dtype=dtype), requires_grad=True),
                "b2": Tensor(np.zeros(size, dtype=dtype), requires_grad=True),
            }

    def named_parameters(self):
        out = {}
        for name, layer in self.maps.items():
            for k, p in layer.items():
                out[f"hyper.{name}.{k}"] = p
        return out

    def generate_adapters(self, e_explain):
        """Weight deltas keyed like the recommender's layer tensors."""
        e = e_explain if isinstance(e_explain, Tensor) else Tensor(e_explain)
        if not np.isfinite(e.data).all():
            raise ValueError("explanation embedding must be finite")
        row = reshape(e, (1, self.d_explain))
        deltas = {}
        for name, shape in self.target_shapes.items():
            layer = self.maps[name]
            hidden = gelu(add(matmul(row, layer["w1"]), layer["b1"]))
            flat = add(matmul(hidden, layer["w2"]), layer["b2"])
            deltas[name] = scale(reshape(flat, shape), self.output_scale)
        return deltas


def score_conditioned(base, hyper, hist_ids, e_explain, candidate_ids):
    """Relevance scores for candidates given history + explanation condition."""
    if len(hist_ids) == 0:
        raise ValueError("history must be non-empty")
    deltas = hyper.generate_adapters(e_explain)
    state = base.user_state(hist_ids, deltas=deltas)
    return base.score_items(state, candidate_ids)


def eer_loss(base, hyper, batch, training=True, rng=None):
    """Mean BPR loss over (hist, target, e_explain, negative) examples."""
    losses = []
    for hist_ids, target, e_explain, negative in batch:
        deltas = hyper.generate_adapters(e_explain)
        enc = base.encode_sequence(hist_ids, deltas=deltas, training=training, rng=rng)
        state = take_rows(enc, [enc.shape[0] - 1])
        pair = take_rows(base.item_emb, [target, negative])
        scores = tsum(mul(pair, state), axis=1)
        margin = add(take_rows(scores, [0]), scale(take_rows(scores, [1]), -1.0))
        losses.append(softplus(scale(margin, -1.0)))
    acc = losses[0]
    for extra in losses[1:]:
        acc = add(acc, extra)
    return reshape(scale(acc, 1.0 / len(losses)), ())


def build_training_examples(split, gt_records, encoder, max_len, dtype=np.float32):
    """Per-user (hist, target, e_gt, forbidden-set) tuples from the train split.

    Every qualifying pair must have a ground-truth explanation; offending
    pairs are reported together.
    """
    examples = []
    missing = []
    for user in sorted(split.train):
        frag = truncate_sequence(split.train[user], max_len + 1)
        if len(frag) < 2:
            continue
        ids = split.dense_ids(frag.items)
        target_item = split.train[user].items[-1]
        rec = gt_records.get((user, target_item))
        if rec is None:
            missing.append((user, target_item))
            continue
        e_gt = encoder.embed_text(rec.text).astype(dtype)
        forbidden = set(split.dense_ids(split.train[user].items))
        examples.append((user, ids[:-1], ids[-1], e_gt, forbidden))
    if missing:
        raise MissingExplanationError(f"pairs without ground-truth explanations: {missing}")
    return examples


def train_eer(base, hyper, split, gt_records, encoder, epochs, lr, batch_size,
              weight_decay, seed, max_len=None):
    """Joint fine-tuning of recommender + hypernetwork; per-epoch mean loss."""
    from .seqrec import sample_negative

    max_len = max_len or base.max_len
    examples = build_training_examples(split, gt_records, encoder, max_len,
                                       dtype=base.item_emb.dtype)
    if not examples:
        raise ValueError("no usable training examples")
    rng = RngState(seed).spawn("train-eer")
    params = dict(base.named_parameters())
    params.update(hyper.named_parameters())
    opt = Adam(params, lr=lr, weight_decay=weight_decay)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        for start in range(0, len(order), batch_size):
            chunk = [examples[int(i)] for i in order[start : start + batch_size]]
            batch = []
            for _, hist, target, e_gt, forbidden in chunk:
                negative = sample_negative(rng, base.num_items, forbidden)
                batch.append((hist, target, e_gt, negative))
            opt.zero_grads()
            with Tape() as tape:
                loss = eer_loss(base, hyper, batch, training=True, rng=rng)
            backward(tape, loss)
            opt.step()
            total += loss.item() * len(batch)
        curve.append(total / len(examples))
    return curve


def _condition_text(condition, user, target_item, gt_records, seg_outputs, train_texts, rng):
    if condition == "empty":
        return ""
    if condition == "ground_truth":
        rec = gt_records.get((user, target_item))
        if rec is None:
            raise CoverageError(f"no ground-truth explanation for ({user}, {target_item})")
        return rec.text
    if condition == "random":
        return train_texts[int(rng.integers(0, len(train_texts)))]
    if condition == "generated":
        text = seg_outputs.get((user, target_item))
        if text is None:
            raise CoverageError(f"no generated explanation for ({user}, {target_item})")
        return text
    raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")


def evaluate_utility(base, hyper, split, condition, encoder, gt_records=None,
                     seg_outputs=None, k_list=(5, 10), seed=0,
                     exclude_history=True, max_len=None):
    """Recall@K / NDCG@K of the conditioned recommender over test pairs.

    The scored history never contains the target item (asserted per case);
    candidates are the catalog minus the user's training-history items
    (minus the target itself), switchable to the full catalog.
    """
    max_len = max_len or base.max_len
    rng = RngState(seed).spawn(f"evaluate/{condition}")
    train_texts = None
    if condition == "random":
        if not gt_records:
            raise CoverageError("random condition needs training-split explanations")
        train_pairs = protocol_pairs(split)["train"]
        train_texts = [gt_records[p].text for p in train_pairs if p in gt_records]
        if not train_texts:
            raise CoverageError("no training-split explanations to sample from")

    all_ids = np.arange(1, split.num_items + 1)
    sums = {f"recall@{k}": 0.0 for k in k_list}
    sums.update({f"ndcg@{k}": 0.0 for k in k_list})
    cases = 0
    for user in sorted(split.test):
        target_item = split.test[user].items[0]
        target = split.item_index[target_item]
        train_frag = split.train.get(user)
        if train_frag is None:
            continue
        val_frag = split.validation.get(user)
        hist_items = list(train_frag.items) + (list(val_frag.items) if val_frag else [])
        hist_ids = [i for i in split.dense_ids(hist_items) if i != target]
        if not hist_ids:
            continue
        hist_ids = hist_ids[-max_len:]
        if target in hist_ids:
            raise LeakageError(f"target {target_item} leaked into scored history of {user}")
        text = _condition_text(condition, user, target_item, gt_records, seg_outputs,
                               train_texts, rng)
        e_explain = encoder.embed_text(text).astype(base.item_emb.dtype)
        if exclude_history:
            excluded = set(split.dense_ids(train_frag.items)) - {target}
            candidates = np.array([i for i in all_ids if i not in excluded])
        else:
            candidates = all_ids
        scores = score_conditioned(base, hyper, hist_ids, e_explain, candidates)
        ranked = ranked_list(list(candidates), list(scores))
        for k in k_list:
            sums[f"recall@{k}"] += recall_at_k(ranked, target, k)
            sums[f"ndcg@{k}"] += ndcg_at_k(ranked, target, k)
        cases += 1
    if cases == 0:
        raise ValueError("no evaluable test cases")
    report = {name: value / cases for name, value in sums.items()}
    report["cases"] = cases
    report["condition"] = condition
    return report
