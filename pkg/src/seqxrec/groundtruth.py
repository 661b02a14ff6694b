"""Dual-level reference explanations: category statements plus intent phrases.

Deterministic templates by default. An external text-completion client can
be plugged in; any failure falls back to the templates so the pipeline is
always offline-complete.
"""

from __future__ import annotations

import hashlib
import json
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .data import build_item_description
from .numerics import RngState
from .numerics.rng import _fold_tag


@dataclass(frozen=True)
class ExplanationRecord:
    user_id: str
    item_id: str
    category_level: str
    intent_level: str
    provenance: str  # template | external

    @property
    def text(self):
        """Training/evaluation target: "category | intent"."""
        return f"{self.category_level} | {self.intent_level}"


class HttpLLMClient:
    """Plain text-in/text-out completion endpoint.

    Never constructed implicitly; the endpoint address and the name of the
    environment variable holding the credential are explicit configuration.
    """

    def __init__(self, endpoint, api_key=None, timeout=10.0, retries=1):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries

    def complete(self, prompt: str) -> str:
        last_exc = None
        for _ in range(max(1, self.retries)):
            try:
                req = urllib.request.Request(
                    self.endpoint,
                    data=prompt.encode("utf-8"),
                    headers={"Content-Type": "text/plain"}
                    | ({"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}),
                )
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return resp.read().decode("utf-8")
            except Exception as exc:  # noqa: BLE001 - any transport failure falls back
                last_exc = exc
        raise last_exc


def _load_bank(name):
    text = resources.files("seqxrec.templates").joinpath(name).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


_EXPLICIT = _load_bank("intent_explicit.txt")
_IMPLICIT = _load_bank("intent_implicit.txt")


def category_explanation(item) -> str:
    if not item.categories:
        return "this item has no listed category"
    cats = ", ".join(item.categories[:3])
    return f"this item belongs to {cats}"


def intent_explanation(item, rng: RngState) -> str:
    """One explicit intent (names the category) and one implicit one (does not)."""
    if not item.categories:
        return "something matching my recent activity; a follow-on to my history"
    category = item.categories[0]
    offset = rng.integers(0, len(_EXPLICIT) * len(_IMPLICIT))
    spread = int(_fold_tag(category.lower()) % 997)
    explicit = _EXPLICIT[(offset + spread) % len(_EXPLICIT)].format(category=category)
    idx = (offset + spread) % len(_IMPLICIT)
    lowered = category.lower()
    for step in range(len(_IMPLICIT)):
        implicit = _IMPLICIT[(idx + step) % len(_IMPLICIT)]
        if lowered not in implicit.lower():
            break
    return f"{explicit}; {implicit}"


def _render_prompt(item):
    return (
        "given the item below, write two lines:\n"
        "category: a one-sentence justification naming its categories\n"
        "intent: one explicit need naming a category and one implicit need that avoids naming it\n\n"
        + build_item_description(item)
    )


def _parse_external(text):
    category = intent = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.lower().startswith("category:"):
            category = stripped.split(":", 1)[1].strip()
        elif stripped.lower().startswith("intent:"):
            intent = stripped.split(":", 1)[1].strip()
    if not category or not intent:
        raise ValueError("external response missing category/intent lines")
    return category, intent


def protocol_pairs(split):
    """The (user, target item) pairs every stage agrees on.

    Training pairs take the last training item as target (the generator sees
    the full training fragment); validation/test pairs take the first item
    of their window, predicted from everything before it.
    """
    pairs = {"train": [], "validation": [], "test": []}
    for user in sorted(split.train):
        pairs["train"].append((user, split.train[user].items[-1]))
    for name, part in (("validation", split.validation), ("test", split.test)):
        for user in sorted(part):
            pairs[name].append((user, part[user].items[0]))
    return pairs


def build_ground_truth(split, catalog, client=None, seed=0, cache_dir=None):
    """One ExplanationRecord per protocol pair, across all three windows.

    Returns (records, stats) where records maps (user_id, item_id) to the
    record and stats counts template/external/failed generations.
    """
    root = RngState(seed).spawn("ground-truth")
    records = {}
    stats = {"template": 0, "external": 0, "failures": 0}
    pairs = protocol_pairs(split)
    for name in ("train", "validation", "test"):
        for user, item_id in pairs[name]:
            if (user, item_id) in records:
                continue
            meta = catalog.get(item_id)
            if meta is None:
                raise KeyError(f"item {item_id!r} missing from catalog")
            rng = root.spawn(f"{user}/{item_id}")
            category_level = category_explanation(meta)
            intent_level = intent_explanation(meta, rng)
            provenance = "template"
            if client is not None:
                try:
                    raw = _cached_complete(client, meta, cache_dir)
                    category_level, intent_level = _parse_external(raw)
                    provenance = "external"
                except Exception:  # noqa: BLE001 - template fallback on any failure
                    stats["failures"] += 1
            stats[provenance] += 1
            records[(user, item_id)] = ExplanationRecord(
                user_id=user,
                item_id=item_id,
                category_level=category_level,
                intent_level=intent_level,
                provenance=provenance,
            )
    return records, stats


def _cached_complete(client, meta, cache_dir):
    prompt = _render_prompt(meta)
    if cache_dir is None:
        return client.complete(prompt)
    key = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]
    path = Path(cache_dir) / f"{meta.item_id}-{key}.txt"
    if path.exists():
        return path.read_text(encoding="utf-8")
    out = client.complete(prompt)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(out, encoding="utf-8")
    return out


def save_ground_truth(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for (user, item), rec in sorted(records.items()):
            fh.write(
                json.dumps(
                    {
                        "user_id": user,
                        "item_id": item,
                        "category_level": rec.category_level,
                        "intent_level": rec.intent_level,
                        "provenance": rec.provenance,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_ground_truth(path):
    records = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records[(rec["user_id"], rec["item_id"])] = ExplanationRecord(
                user_id=rec["user_id"],
                item_id=rec["item_id"],
                category_level=rec["category_level"],
                intent_level=rec["intent_level"],
                provenance=rec["provenance"],
            )
    return records
