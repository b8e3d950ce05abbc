"""Dataset records: JSONL ingestion and a bundled toy corpus generator."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .seeding import rng_for


class DatasetError(Exception):
    """Raised for malformed dataset files; messages name the offending line."""


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    source: str
    reference: str


_REQUIRED_KEYS = ("id", "source", "reference")


def load_dataset(path) -> list[DatasetRecord]:
    """Read JSON-lines records with keys id/source/reference, validating each."""
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"line {lineno}: expected a JSON object")
            for key in _REQUIRED_KEYS:
                if key not in obj:
                    raise DatasetError(f"line {lineno}: missing key {key!r}")
                if not isinstance(obj[key], str) or not obj[key].strip():
                    raise DatasetError(f"line {lineno}: field {key!r} must be a nonempty string")
            if obj["id"] in seen:
                raise DatasetError(f"line {lineno}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            records.append(DatasetRecord(id=obj["id"], source=obj["source"],
                                         reference=obj["reference"]))
    return records


def save_dataset(path, records: list[DatasetRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"id": rec.id, "source": rec.source,
                                 "reference": rec.reference}) + "\n")


# -- toy corpus -------------------------------------------------------------

_TOPICS = (
    {"subject": "the gardener", "object": "the orchard",
     "verbs": ("tends", "waters", "prunes"),
     "extras": ("blossom", "ladder", "harvest", "compost", "greenhouse"),
     "places": ("near the fence", "behind the cottage", "beside the gate")},
    {"subject": "the sailor", "object": "the harbor",
     "verbs": ("watches", "charts", "patrols"),
     "extras": ("lantern", "anchor", "compass", "logbook", "mooring"),
     "places": ("near the jetty", "behind the lighthouse", "beside the pier")},
    {"subject": "the baker", "object": "the kitchen",
     "verbs": ("warms", "cleans", "stocks"),
     "extras": ("pastry", "griddle", "proofing", "cinnamon", "counter"),
     "places": ("near the ovens", "behind the pantry", "beside the racks")},
    {"subject": "the ranger", "object": "the forest",
     "verbs": ("patrols", "surveys", "protects"),
     "extras": ("thicket", "trailhead", "warden", "canopy", "firebreak"),
     "places": ("near the ridge", "behind the cabin", "beside the creek")},
    {"subject": "the painter", "object": "the studio",
     "verbs": ("arranges", "lights", "sweeps"),
     "extras": ("canvas", "palette", "easel", "pigment", "varnish"),
     "places": ("near the window", "behind the curtain", "beside the shelf")},
    {"subject": "the miller", "object": "the granary",
     "verbs": ("fills", "guards", "repairs"),
     "extras": ("millstone", "sacking", "harvest", "ledger", "hopper"),
     "places": ("near the sluice", "behind the barn", "beside the scales")},
)


def _lead_sentence(topic, rng) -> str:
    verb = topic["verbs"][rng.integers(len(topic["verbs"]))]
    return f"{topic['subject']} {verb} {topic['object']} every morning ."


def _detail_sentence(topic, rng) -> str:
    verb = topic["verbs"][rng.integers(len(topic["verbs"]))]
    extra = topic["extras"][rng.integers(len(topic["extras"]))]
    place = topic["places"][rng.integers(len(topic["places"]))]
    forms = (
        f"{topic['subject']} {verb} {topic['object']} {place} .",
        f"the {extra} waits {place} .",
        f"every evening {topic['subject']} checks the {extra} .",
        f"{topic['object']} needs the {extra} before sunset .",
        f"a quiet {extra} rests {place} .",
    )
    return forms[rng.integers(len(forms))]


def generate_toy_dataset(n_records: int = 60, seed: int = 0,
                         sentences_per_doc: int = 8) -> list[DatasetRecord]:
    """Templated documents with extractive lead-sentence references.

    Every sentence position is drawn from the same detail pool, so document
    endings carry no special signature and the end-of-sequence hazard after a
    period is roughly uniform across the corpus.
    """
    if n_records < 1:
        raise ValueError(f"n_records must be >= 1, got {n_records}")
    if sentences_per_doc < 2:
        raise ValueError(
            f"sentences_per_doc must be >= 2, got {sentences_per_doc}")
    rng = rng_for(seed, "toy-data")
    records = []
    for i in range(n_records):
        topic = _TOPICS[i % len(_TOPICS)]
        lead = _lead_sentence(topic, rng)
        sentences = [lead] + [_detail_sentence(topic, rng)
                              for _ in range(sentences_per_doc - 1)]
        records.append(DatasetRecord(id=f"toy-{i:03d}",
                                     source=" ".join(sentences),
                                     reference=lead))
    return records
