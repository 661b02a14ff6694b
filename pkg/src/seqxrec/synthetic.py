"""Synthetic interaction generator: users carry a latent category and pick
items from it with a configurable fidelity. Stands in for the real datasets
at desk scale."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .data import ItemMeta, RawInteraction
from .numerics import RngState


@dataclass
class SyntheticSpec:
    num_users: int = 200
    num_items: int = 300
    num_categories: int = 10
    fidelity: float = 0.9  # probability an interaction stays in the user's category
    min_len: int = 20
    max_len: int = 60
    seed: int = 7

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError("fidelity must lie in [0, 1]")
        if self.min_len < 2 or self.max_len < self.min_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if self.num_categories > self.num_items:
            raise ValueError("more categories than items")


def item_category(item_index, spec):
    return item_index % spec.num_categories


def gen_synthetic(spec: SyntheticSpec):
    """Returns (interactions, catalog); deterministic in the spec seed."""
    rng = RngState(spec.seed).spawn("synthetic")
    catalog = {}
    by_category = {c: [] for c in range(spec.num_categories)}
    for i in range(spec.num_items):
        item_id = f"item_{i:04d}"
        cat = item_category(i, spec)
        by_category[cat].append(item_id)
        catalog[item_id] = ItemMeta(
            item_id=item_id,
            categories=[f"category_{cat}"],
            description_fields={
                "name": f"spot {i}",
                "attributes": {"style": f"style_{cat}"},
            },
        )

    events = []  # (user, draw index) in per-user order
    user_category = {}
    for u in range(spec.num_users):
        user_id = f"user_{u:03d}"
        user_category[user_id] = int(rng.integers(0, spec.num_categories))
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        events.extend((user_id, j) for j in range(length))

    # interleave users over a global clock; per-user order is preserved,
    # so per-user timestamps are strictly increasing
    order = rng.permutation(len(events))
    schedule = [None] * len(events)
    for tick, idx in enumerate(order):
        schedule[int(idx)] = tick
    interactions = []
    for (user_id, _), tick in zip(events, schedule):
        cat = user_category[user_id]
        if rng.uniform() < spec.fidelity:
            pool = by_category[cat]
        else:
            pool = None
        if pool is not None:
            item_id = pool[int(rng.integers(0, len(pool)))]
        else:
            item_id = f"item_{int(rng.integers(0, spec.num_items)):04d}"
        interactions.append(RawInteraction(user_id, item_id, int(tick)))
    interactions.sort(key=lambda r: r.timestamp)
    return interactions, catalog


def write_dataset(interactions, catalog, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inter_path = out / "interactions.jsonl"
    items_path = out / "items.jsonl"
    with open(inter_path, "w", encoding="utf-8") as fh:
        for rec in interactions:
            fh.write(
                json.dumps(
                    {"user_id": rec.user_id, "item_id": rec.item_id, "timestamp": rec.timestamp},
                    sort_keys=True,
                )
                + "\n"
            )
    with open(items_path, "w", encoding="utf-8") as fh:
        for item_id in sorted(catalog):
            meta = catalog[item_id]
            row = {"item_id": item_id, "categories": meta.categories}
            row.update(meta.description_fields)
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return inter_path, items_path
