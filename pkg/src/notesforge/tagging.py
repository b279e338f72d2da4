"""Semantic keyword tagging: expand seed words through embedding similarity,
then record every occurrence of an expanded word in the notes."""
from __future__ import annotations

import csv
import datetime as dt
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import RawNote, TokenDoc
from .embedding import EmbeddingModel, similarities

__all__ = [
    "TopicLexicon",
    "TagEvent",
    "DEFAULT_LEXICONS",
    "expand_lexicon",
    "tag_corpus",
    "load_lexicon_config",
    "write_events",
    "read_events",
]

DEFAULT_LEXICONS = (
    {"topic": "market-volatility", "seeds": ["market", "volatility"], "threshold": 0.7},
    {"topic": "peace-of-mind", "seeds": ["sensitive", "concern", "panic"], "threshold": 0.7},
)


@dataclass(frozen=True)
class TopicLexicon:
    topic_name: str
    seed_words: tuple[str, ...]
    threshold: float = 0.7
    expanded: Mapping[str, float] = field(default_factory=dict)
    missing_seeds: tuple[str, ...] = ()

    def __contains__(self, token: str) -> bool:
        return token in self.expanded


@dataclass(frozen=True, order=True)
class TagEvent:
    note_id: str
    position: int
    topic_name: str
    client_id: str
    date: dt.date
    matched_token: str
    similarity: float


def expand_lexicon(model: EmbeddingModel, seeds: Sequence[str], threshold: float = 0.7, topic_name: str = "") -> TopicLexicon:
    """All vocabulary words whose best cosine to any in-vocabulary seed reaches ``threshold``.

    Seeds themselves are included at similarity 1.0. Seeds missing from the
    embedding vocabulary are reported through a warning and ``missing_seeds``.
    """
    if not seeds:
        raise ValueError("at least one seed word is required")
    present = [s for s in dict.fromkeys(seeds) if s in model.vocab]
    missing = tuple(s for s in dict.fromkeys(seeds) if s not in model.vocab)
    if not present:
        raise KeyError(f"no seed word of {topic_name or list(seeds)!r} is in the embedding vocabulary: {list(seeds)}")
    if missing:
        warnings.warn(f"lexicon {topic_name!r}: seeds not in vocabulary: {', '.join(missing)}", stacklevel=2)
    best = np.max(np.vstack([similarities(model, s) for s in present]), axis=0)
    tokens = model.vocab.tokens
    expanded = {tokens[i]: float(best[i]) for i in np.flatnonzero(best >= threshold)}
    for s in present:
        expanded[s] = 1.0
    return TopicLexicon(topic_name, tuple(seeds), threshold, dict(sorted(expanded.items())), missing)


def tag_corpus(
    docs: Sequence[TokenDoc], notes_meta: Mapping[str, RawNote] | Sequence[RawNote], lexicons: Sequence[TopicLexicon]
) -> list[TagEvent]:
    """One event per (token occurrence, matching lexicon), ordered by (note_id, position, topic)."""
    if not isinstance(notes_meta, Mapping):
        notes_meta = {n.note_id: n for n in notes_meta}
    missing = [d.note_id for d in docs if d.note_id not in notes_meta]
    if missing:
        raise KeyError(f"no note metadata for {len(missing)} documents, e.g. {missing[:5]}")
    events = []
    for doc in docs:
        meta = notes_meta[doc.note_id]
        for pos, tok in enumerate(doc.tokens):
            for lex in lexicons:
                sim = lex.expanded.get(tok)
                if sim is not None:
                    events.append(TagEvent(doc.note_id, pos, lex.topic_name, meta.client_id, meta.timestamp, tok, sim))
    events.sort(key=lambda e: (e.note_id, e.position, e.topic_name))
    return events


def load_lexicon_config(path: str | Path) -> list[dict]:
    """Read lexicon definitions: one JSON object or a list of them.

    Each object is ``{"topic": ..., "seeds": [...], "threshold": 0.7}``.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = [data]
    out = []
    for obj in data:
        if "topic" not in obj or "seeds" not in obj:
            raise ValueError(f"{path}: lexicon entries need 'topic' and 'seeds'")
        out.append({"topic": str(obj["topic"]), "seeds": [str(s) for s in obj["seeds"]], "threshold": float(obj.get("threshold", 0.7))})
    return out


_EVENT_FIELDS = ["note_id", "client_id", "date", "topic", "token", "similarity", "position"]


def write_events(events: Sequence[TagEvent], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_EVENT_FIELDS)
        for e in events:
            w.writerow([e.note_id, e.client_id, e.date.isoformat(), e.topic_name, e.matched_token, repr(float(e.similarity)), e.position])


def read_events(path: str | Path) -> list[TagEvent]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(_EVENT_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [
            TagEvent(
                r["note_id"], int(r["position"]), r["topic"], r["client_id"],
                dt.date.fromisoformat(r["date"]), r["token"], float(r["similarity"]),
            )
            for r in reader
        ]
