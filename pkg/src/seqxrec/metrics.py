"""Ranking and text metrics (single relevant item per test case)."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .textembed import tokenize


class TargetNotInCandidatesError(ValueError):
    pass


def ranked_list(candidate_ids, scores):
    """Candidates by descending score, ties broken by ascending id."""
    order = sorted(range(len(candidate_ids)), key=lambda i: (-scores[i], candidate_ids[i]))
    return [candidate_ids[i] for i in order]


def _rank_of(ranked, target):
    try:
        return ranked.index(target) + 1
    except ValueError:
        raise TargetNotInCandidatesError(f"target {target!r} absent from the ranked candidates")


def recall_at_k(ranked, target, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    return 1.0 if _rank_of(ranked, target) <= k else 0.0


def ndcg_at_k(ranked, target, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    rank = _rank_of(ranked, target)
    if rank > k:
        return 0.0
    return 1.0 / math.log2(rank + 1)


def bleu(candidate, reference):
    """Sentence BLEU-4, uniform weights, add-one smoothing of zero counts.

    An empty candidate, or one sharing no unigram with the reference,
    scores 0; zero counts at higher orders are smoothed (m+1)/(t+1). The
    brevity penalty is exp(1 - r/c) for c < r.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand_ngrams = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
        ref_ngrams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
        total = sum(cand_ngrams.values())
        matched = sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items())
        if n == 1 and matched == 0:
            return 0.0
        if matched == 0 or total == 0:
            p = (matched + 1.0) / (total + 1.0)
        else:
            p = matched / total
        log_sum += 0.25 * math.log(p)
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return bp * math.exp(log_sum)


def embed_similarity(encoder, candidate, reference):
    """Cosine between encoder embeddings; zero vectors score 0."""
    a = encoder.embed_text(candidate)
    b = encoder.embed_text(reference)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
