import pytest

from seqxrec.data import ItemMeta, RawInteraction, chronological_split
from seqxrec.groundtruth import (
    build_ground_truth,
    category_explanation,
    intent_explanation,
    load_ground_truth,
    protocol_pairs,
    save_ground_truth,
)
from seqxrec.numerics import RngState


def test_category_explanation_restaurants():
    meta = ItemMeta(item_id="i", categories=["Restaurants"])
    assert category_explanation(meta) == "this item belongs to Restaurants"


def test_category_explanation_caps_at_three():
    meta = ItemMeta(item_id="i", categories=["A", "B", "C", "D"])
    assert category_explanation(meta) == "this item belongs to A, B, C"


def test_category_explanation_fallback():
    meta = ItemMeta(item_id="i", categories=[])
    assert category_explanation(meta) == "this item has no listed category"
    assert category_explanation(meta) == category_explanation(meta)


def test_intent_explanation_deterministic_per_seed():
    meta = ItemMeta(item_id="i", categories=["category_3"])
    assert intent_explanation(meta, RngState(5)) == intent_explanation(meta, RngState(5))
    assert intent_explanation(meta, RngState(5)) != intent_explanation(meta, RngState(6))


def test_intent_explicit_names_category_implicit_does_not():
    meta = ItemMeta(item_id="i", categories=["category_3"])
    for seed in range(10):
        text = intent_explanation(meta, RngState(seed))
        explicit, implicit = text.split("; ", 1)
        assert "category_3" in explicit
        assert "category_3" not in implicit


def test_distinct_categories_give_distinct_texts():
    seen = set()
    for j in range(8):
        meta = ItemMeta(item_id="i", categories=[f"category_{j}"])
        seen.add(intent_explanation(meta, RngState(7)))
    assert len(seen) == 8


def _toy_split_and_catalog():
    recs = []
    t = 0
    for u in range(4):
        for j in range(10):
            recs.append(RawInteraction(f"u{u}", f"i{(u + j) % 6}", t))
            t += 1
    split = chronological_split(recs)
    catalog = {f"i{j}": ItemMeta(item_id=f"i{j}", categories=[f"cat{j % 3}"]) for j in range(6)}
    return split, catalog


def test_build_ground_truth_covers_every_protocol_pair():
    split, catalog = _toy_split_and_catalog()
    records, stats = build_ground_truth(split, catalog, seed=1)
    pairs = protocol_pairs(split)
    for name in ("train", "validation", "test"):
        for pair in pairs[name]:
            assert pair in records
    assert stats["external"] == 0
    assert all(r.provenance == "template" for r in records.values())


class _AlwaysFails:
    calls = 0

    def complete(self, prompt):
        type(self).calls += 1
        raise RuntimeError("endpoint down")


def test_failing_client_falls_back_to_templates():
    split, catalog = _toy_split_and_catalog()
    baseline, _ = build_ground_truth(split, catalog, seed=1)
    with_client, stats = build_ground_truth(split, catalog, client=_AlwaysFails(), seed=1)
    assert _AlwaysFails.calls > 0
    assert stats["failures"] == stats["template"] > 0
    assert with_client == baseline


class _Parrot:
    def complete(self, prompt):
        return "category: from the wire\nintent: also from the wire"


def test_working_client_marks_external_provenance():
    split, catalog = _toy_split_and_catalog()
    records, stats = build_ground_truth(split, catalog, client=_Parrot(), seed=1)
    assert stats["external"] == len(records)
    rec = next(iter(records.values()))
    assert rec.category_level == "from the wire"
    assert rec.provenance == "external"


def test_ground_truth_roundtrip(tmp_path):
    split, catalog = _toy_split_and_catalog()
    records, _ = build_ground_truth(split, catalog, seed=1)
    path = tmp_path / "gt.jsonl"
    save_ground_truth(records, path)
    loaded = load_ground_truth(path)
    assert loaded == records


def test_referential_integrity_enforced():
    split, catalog = _toy_split_and_catalog()
    catalog.pop("i0", None)
    missing = any(
        item == "i0" for pairs in protocol_pairs(split).values() for _, item in pairs
    )
    if missing:
        with pytest.raises(KeyError):
            build_ground_truth(split, catalog, seed=1)
