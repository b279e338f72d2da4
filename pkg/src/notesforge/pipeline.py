"""Stage wiring shared by the command line and the end-to-end checks."""
from __future__ import annotations

import datetime as dt
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import embedding, features, tagging
from .classify import Dataset
from .corpus import PhraseTable, PreprocessConfig, RawNote, TokenDoc, Vocabulary, preprocess
from .features import FeatureRow, LeakageError, TransactionRecord
from .synth import Scenario
from .tagging import TagEvent, TopicLexicon

__all__ = ["expand_lexicons", "featurize", "ScenarioRun", "scenario_dataset"]


def expand_lexicons(
    model: embedding.EmbeddingModel, defs: Sequence[Mapping] = tagging.DEFAULT_LEXICONS, threshold: float | None = None
) -> list[TopicLexicon]:
    """Expand each ``{"topic", "seeds", "threshold"}`` definition; ``threshold`` overrides them all."""
    return [
        tagging.expand_lexicon(model, d["seeds"], d.get("threshold", 0.7) if threshold is None else threshold, d["topic"])
        for d in defs
    ]


def featurize(
    notes: Sequence[RawNote],
    events: Sequence[TagEvent],
    transactions: Sequence[TransactionRecord],
    vix: Sequence[tuple[dt.date, float]],
    labels: Mapping[str, int],
    as_of: dt.date,
    topics: Sequence[str],
    *,
    lookback: int = 182,
    half_life: float = 30.0,
) -> list[FeatureRow]:
    """Per-client rows for every labelled client.

    Notes, tag events and transactions dated after ``as_of`` raise
    :class:`LeakageError`. VIX closes after ``as_of`` are market context
    rather than client data and are simply cut off.
    """
    late = [n.note_id for n in notes if n.timestamp > as_of]
    if late:
        raise LeakageError(f"{len(late)} notes dated after as_of={as_of.isoformat()}, e.g. {late[:5]}")
    counts = Counter(n.client_id for n in notes)
    for c in labels:
        counts.setdefault(c, 0)
    note_group = features.note_features(events, counts, as_of, topics, half_life, float(lookback))
    past_vix = [(d, v) for d, v in vix if d <= as_of]
    weekly = features.weekly_vix(past_vix) if past_vix else []
    txn_group = features.txn_features(transactions, weekly, as_of, lookback, clients=labels)
    return features.build_dataset(
        note_group,
        txn_group,
        labels,
        note_defaults={f"{t}.days_since_last": float(lookback) for t in topics},
        txn_defaults={"recency_days": float(lookback)},
    )


@dataclass
class ScenarioRun:
    docs: list[TokenDoc]
    vocab: Vocabulary
    phrases: PhraseTable
    embedding: embedding.EmbeddingModel
    lexicons: list[TopicLexicon]
    events: list[TagEvent]
    rows: list[FeatureRow]
    dataset: Dataset = field(repr=False)


def scenario_dataset(
    scenario: Scenario,
    preprocess_config: PreprocessConfig | None = None,
    embedding_config: embedding.EmbeddingConfig | None = None,
    lexicon_defs: Sequence[Mapping] = tagging.DEFAULT_LEXICONS,
    *,
    lookback: int = 182,
    half_life: float = 30.0,
) -> ScenarioRun:
    """Preprocess, embed, tag and featurize a generated scenario."""
    docs, vocab, table = preprocess(scenario.notes, preprocess_config)
    emb = embedding.train(docs, embedding_config or embedding.EmbeddingConfig(seed=scenario.spec.seed))
    lexicons = expand_lexicons(emb, lexicon_defs)
    events = tagging.tag_corpus(docs, scenario.notes, lexicons)
    rows = featurize(
        scenario.notes,
        events,
        scenario.transactions,
        scenario.vix,
        scenario.labels,
        scenario.as_of,
        [lex.topic_name for lex in lexicons],
        lookback=lookback,
        half_life=half_life,
    )
    return ScenarioRun(docs, vocab, table, emb, lexicons, events, rows, Dataset.from_rows(rows))
