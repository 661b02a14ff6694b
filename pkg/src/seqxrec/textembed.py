"""Deterministic text tokenization and embedding.

Stands in for a pretrained sentence encoder behind the same interface:
tokenize, look up a fixed embedding table, mean-pool. A real encoder could
replace :class:`SemanticEncoder` as long as ``embed_text`` keeps returning
a fixed-width vector for arbitrary text.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngState

PAD, UNK, BOS, EOS = 0, 1, 2, 3
_SPECIALS = ["<pad>", "<unk>", "<bos>", "<eos>"]
_TOKEN_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation acts as a separator."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: list[str]
    min_frequency: int

    pad_id: int = PAD
    unk_id: int = UNK
    bos_id: int = BOS
    eos_id: int = EOS

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(tok, self.unk_id) for tok in tokenize(text)]

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            if i in (self.pad_id, self.bos_id, self.eos_id):
                continue
            words.append(self.id_to_token[i])
        return " ".join(words)


def build_vocab(corpus, min_freq=1) -> Vocabulary:
    """Frequency-then-lexicographic token ordering; below-cutoff tokens map to unk."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    counts = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    id_to_token = list(_SPECIALS) + kept
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocabulary(token_to_id=token_to_id, id_to_token=id_to_token, min_frequency=min_freq)


@dataclass
class SemanticEncoder:
    """Immutable mean-pooled embedding lookup over a fixed vocabulary."""

    vocab: Vocabulary
    table: np.ndarray = field(repr=False)
    dim: int = 64

    @classmethod
    def create(cls, vocab: Vocabulary, dim: int, seed: int) -> "SemanticEncoder":
        rng = RngState(seed)
        table = rng.normal((len(vocab), dim), std=1.0 / np.sqrt(dim))
        table[PAD] = 0.0
        return cls(vocab=vocab, table=table, dim=dim)

    def embed_text(self, text: str) -> np.ndarray:
        """Mean of known-token embeddings; empty or all-unknown text -> zero vector."""
        ids = [i for i in self.vocab.encode(text) if i != self.vocab.unk_id]
        if not ids:
            return np.zeros(self.dim)
        return self.table[ids].mean(axis=0)

    def embed_sequence(self, descriptions) -> np.ndarray:
        """Time-major (n, dim) matrix; row j embeds descriptions[j]."""
        if len(descriptions) < 1:
            raise ValueError("embed_sequence requires at least one description")
        return np.stack([self.embed_text(d) for d in descriptions])
