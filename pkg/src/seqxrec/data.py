"""Interaction-log ingestion and preprocessing.

File formats (one JSON object per line, UTF-8):

* interactions file: ``{"user_id": str, "item_id": str, "timestamp": int}``
* items file: ``{"item_id": str, "categories": [str, ...], ...description fields}``

Description fields recognized on item records: name, address, city, state,
stars, stars_range, attributes, hours, is_open. Anything else (postal
codes, coordinates, ...) is carried along but never emitted into item
description text.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .numerics import RngState


class InteractionParseError(ValueError):
    pass


class DegenerateSplitError(ValueError):
    pass


@dataclass(frozen=True)
class RawInteraction:
    user_id: str
    item_id: str
    timestamp: int


@dataclass
class ItemMeta:
    item_id: str
    categories: list[str] = field(default_factory=list)
    description_fields: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not self.item_id:
            raise ValueError("item_id must be non-empty")


@dataclass
class UserSequence:
    user_id: str
    items: list[str]
    timestamps: list[int]

    def __len__(self):
        return len(self.items)


@dataclass
class SplitDataset:
    train: dict[str, UserSequence]
    validation: dict[str, UserSequence]
    test: dict[str, UserSequence]
    cutoff_train: int
    cutoff_val: int
    item_index: dict[str, int]
    dropped_users: list[str]

    @property
    def num_items(self):
        return len(self.item_index)

    def dense_ids(self, items):
        return [self.item_index[i] for i in items]


@dataclass
class CategoryStats:
    frequencies: dict[str, float]

    def freq(self, category):
        return self.frequencies.get(category, 0.0)


def load_interactions(path) -> list[RawInteraction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InteractionParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            for key in ("user_id", "item_id", "timestamp"):
                if key not in rec:
                    raise InteractionParseError(f"line {lineno}: missing field {key!r}")
            ts = rec["timestamp"]
            if not isinstance(ts, int) or isinstance(ts, bool):
                raise InteractionParseError(f"line {lineno}: timestamp must be an integer")
            if ts < 0:
                raise InteractionParseError(f"line {lineno}: negative timestamp {ts}")
            out.append(RawInteraction(str(rec["user_id"]), str(rec["item_id"]), ts))
    return out


def load_items(path) -> dict[str, ItemMeta]:
    catalog = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InteractionParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if "item_id" not in rec:
                raise InteractionParseError(f"line {lineno}: missing field 'item_id'")
            item_id = str(rec["item_id"])
            categories = [str(c) for c in rec.get("categories", [])]
            fields = {k: v for k, v in rec.items() if k not in ("item_id", "categories")}
            catalog[item_id] = ItemMeta(item_id=item_id, categories=categories, description_fields=fields)
    return catalog


def k_core_filter(interactions, k, strictly_greater=False):
    """Iteratively drop interactions of users/items with < k (or <= k) events.

    Runs to a fixed point, so every surviving user and item meets the
    threshold in the returned subset.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    need = k + 1 if strictly_greater else k
    current = list(interactions)
    while True:
        users: dict[str, int] = {}
        items: dict[str, int] = {}
        for rec in current:
            users[rec.user_id] = users.get(rec.user_id, 0) + 1
            items[rec.item_id] = items.get(rec.item_id, 0) + 1
        kept = [r for r in current if users[r.user_id] >= need and items[r.item_id] >= need]
        if len(kept) == len(current):
            return kept
        current = kept


def chronological_split(interactions, ratios=(8, 1, 1)) -> SplitDataset:
    """Split at global time cutoffs (80th/90th percentile by default).

    Interactions tied with a cutoff timestamp all land in the earlier
    partition, so cutoff_train < every validation timestamp and
    cutoff_val < every test timestamp.
    """
    if not interactions:
        raise DegenerateSplitError("no interactions to split")
    total = sum(ratios)
    ordered = sorted(enumerate(interactions), key=lambda pair: (pair[1].timestamp, pair[0]))
    records = [rec for _, rec in ordered]
    n = len(records)
    i_train = max(1, n * ratios[0] // total)
    i_val = max(i_train + 1, n * (ratios[0] + ratios[1]) // total)
    if i_val >= n:
        raise DegenerateSplitError(f"only {n} interactions; cannot form three non-empty partitions")
    cutoff_train = records[i_train - 1].timestamp
    cutoff_val = records[i_val - 1].timestamp
    if cutoff_val <= cutoff_train:
        raise DegenerateSplitError("validation window collapsed: cutoffs coincide after tie pulling")

    def bucket(rec):
        if rec.timestamp <= cutoff_train:
            return "train"
        if rec.timestamp <= cutoff_val:
            return "validation"
        return "test"

    parts = {"train": {}, "validation": {}, "test": {}}
    for rec in records:
        frag = parts[bucket(rec)].setdefault(rec.user_id, UserSequence(rec.user_id, [], []))
        frag.items.append(rec.item_id)
        frag.timestamps.append(rec.timestamp)
    if not parts["test"]:
        raise DegenerateSplitError("test partition is empty")

    dropped = sorted(
        u for u in set(parts["validation"]) | set(parts["test"]) if u not in parts["train"]
    )
    for u in dropped:
        parts["validation"].pop(u, None)
        parts["test"].pop(u, None)

    item_ids = sorted({rec.item_id for rec in records})
    item_index = {item: i + 1 for i, item in enumerate(item_ids)}  # 0 reserved for padding
    return SplitDataset(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        cutoff_train=cutoff_train,
        cutoff_val=cutoff_val,
        item_index=item_index,
        dropped_users=dropped,
    )


def truncate_sequence(seq: UserSequence, max_len: int) -> UserSequence:
    """Keep the most recent max_len items."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if len(seq) <= max_len:
        return seq
    return UserSequence(seq.user_id, seq.items[-max_len:], seq.timestamps[-max_len:])


def build_category_stats(train: dict[str, UserSequence], catalog) -> CategoryStats:
    """Per-category share of all (interaction, category) occurrences in training."""
    counts: dict[str, int] = {}
    total = 0
    for frag in train.values():
        for item in frag.items:
            meta = catalog.get(item)
            if meta is None:
                continue
            for cat in meta.categories:
                counts[cat] = counts.get(cat, 0) + 1
                total += 1
    if total == 0:
        return CategoryStats(frequencies={})
    return CategoryStats(frequencies={c: cnt / total for c, cnt in counts.items()})


def downsample_probability(freq, t):
    """Probability that a category occurrence is dropped.

    1 - sqrt(t / freq) for freq > t, else 1.0 (here "1.0" is the formula's
    value for the rare branch; rare categories are always retained, see
    sample_category_sequence for how the branches are applied).
    """
    if freq <= 0.0 or t <= 0.0:
        raise ValueError(f"freq and t must be positive, got freq={freq}, t={t}")
    if freq > t:
        return 1.0 - math.sqrt(t / freq)
    return 1.0


def sample_category_sequence(
    seq: UserSequence,
    catalog,
    stats: CategoryStats,
    rng: RngState,
    t=1e-5,
    max_per_item=3,
    formula_is_drop_probability=True,
) -> list[str]:
    """Up to three categories per item, frequency-downsampled.

    With the default interpretation the formula value is the drop
    probability: common categories (freq > t) survive with probability
    sqrt(t / freq) and rare ones always survive. Setting
    ``formula_is_drop_probability=False`` flips the reading (the value
    becomes the keep probability).
    """
    out = []
    for item in seq.items:
        meta = catalog.get(item)
        if meta is None:
            continue
        for cat in meta.categories[:max_per_item]:
            freq = stats.freq(cat)
            if freq <= t:
                out.append(cat)
                continue
            p = downsample_probability(freq, t)
            u = rng.uniform()
            keep = (u >= p) if formula_is_drop_probability else (u < p)
            if keep:
                out.append(cat)
    return out


# Field order mirrors the structured item description layout; coordinates
# and postal codes are deliberately not part of this list.
DESCRIPTION_FIELD_ORDER = (
    "name",
    "address",
    "city",
    "state",
    "stars",
    "stars_range",
    "attributes",
    "categories",
    "hours",
    "is_open",
)


def build_item_description(meta: ItemMeta) -> str:
    """Canonical "field: value" lines in a fixed order, absent fields skipped."""
    lines = []
    for key in DESCRIPTION_FIELD_ORDER:
        if key == "categories":
            if meta.categories:
                lines.append(f"categories: {', '.join(meta.categories)}")
            continue
        value = meta.description_fields.get(key)
        if value is None:
            continue
        if isinstance(value, dict):
            value = ", ".join(f"{k}={v}" for k, v in sorted(value.items()))
        elif isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines)
