"""Advisor-note ingestion and preprocessing.

The pipeline is clean -> tokenize -> remove_stopwords -> phrases -> lemmatize.
Phrases are mined after stopword removal so that "check on regular basis"
yields the adjacent pair (regular, basis).
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "RawNote",
    "TokenDoc",
    "Vocabulary",
    "PhraseTable",
    "PreprocessConfig",
    "StatsReport",
    "DuplicateNoteError",
    "NoteSchemaError",
    "clean",
    "tokenize",
    "remove_stopwords",
    "default_stopwords",
    "load_stopwords",
    "mine_phrases",
    "apply_phrases",
    "lemmatize",
    "preprocess",
    "corpus_stats",
    "read_notes",
    "write_notes",
    "read_corpus",
    "write_corpus",
]


class NoteSchemaError(ValueError):
    """A note record is missing fields or carries malformed values."""


class DuplicateNoteError(ValueError):
    def __init__(self, duplicates: Sequence[str]):
        self.duplicates = list(duplicates)
        super().__init__(f"duplicate note_id values: {', '.join(self.duplicates)}")


@dataclass(frozen=True)
class RawNote:
    note_id: str
    advisor_id: str
    client_id: str
    timestamp: dt.date
    text: str

    @property
    def is_empty(self) -> bool:
        return not self.text.strip()

    @classmethod
    def from_dict(cls, obj: dict) -> "RawNote":
        missing = [k for k in ("note_id", "advisor_id", "client_id", "date", "text") if k not in obj]
        if missing:
            raise NoteSchemaError(f"note record missing fields {missing}: {obj!r:.200}")
        try:
            date = dt.date.fromisoformat(str(obj["date"]))
        except ValueError as exc:
            raise NoteSchemaError(f"note {obj['note_id']!r}: bad date {obj['date']!r}") from exc
        if not isinstance(obj["text"], str):
            raise NoteSchemaError(f"note {obj['note_id']!r}: text must be a string")
        return cls(str(obj["note_id"]), str(obj["advisor_id"]), str(obj["client_id"]), date, obj["text"])

    def to_dict(self) -> dict:
        return {
            "note_id": self.note_id,
            "advisor_id": self.advisor_id,
            "client_id": self.client_id,
            "date": self.timestamp.isoformat(),
            "text": self.text,
        }


@dataclass(frozen=True)
class TokenDoc:
    note_id: str
    tokens: tuple[str, ...]

    def __init__(self, note_id: str, tokens: Iterable[str]):
        object.__setattr__(self, "note_id", note_id)
        object.__setattr__(self, "tokens", tuple(tokens))

    def __len__(self) -> int:
        return len(self.tokens)


class Vocabulary:
    """Bijection between tokens and contiguous integer ids, with counts.

    Ids are assigned by descending count, ties broken lexicographically.
    """

    def __init__(self, counts: dict[str, int]):
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        self._tokens = [t for t, _ in ordered]
        self._index = {t: i for i, t in enumerate(self._tokens)}
        self._counts = [int(c) for _, c in ordered]

    @classmethod
    def from_docs(cls, docs: Iterable[TokenDoc], min_count: int = 1) -> "Vocabulary":
        counts: Counter[str] = Counter()
        for doc in docs:
            counts.update(doc.tokens)
        return cls({t: c for t, c in counts.items() if c >= min_count})

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index

    def __iter__(self):
        return iter(self._tokens)

    def index_of(self, token: str) -> int:
        return self._index[token]

    def token_of(self, index: int) -> str:
        return self._tokens[index]

    def count(self, token: str) -> int:
        return self._counts[self._index[token]]

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    @property
    def counts(self) -> list[int]:
        return list(self._counts)

    def prune(self, min_count: int) -> "Vocabulary":
        return Vocabulary({t: c for t, c in zip(self._tokens, self._counts) if c >= min_count})

    def encode(self, doc: TokenDoc) -> list[int]:
        try:
            return [self._index[t] for t in doc.tokens]
        except KeyError as exc:
            raise KeyError(f"token {exc.args[0]!r} of note {doc.note_id!r} not in vocabulary") from None

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for t, c in zip(self._tokens, self._counts):
            h.update(f"{t}\t{c}\n".encode())
        return h.hexdigest()

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self._tokens == other._tokens
            and self._counts == other._counts
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["token", "index", "count"])
            for i, (t, c) in enumerate(zip(self._tokens, self._counts)):
                w.writerow([t, i, c])

    @classmethod
    def from_csv(cls, path: str | Path) -> "Vocabulary":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        vocab = cls({r["token"]: int(r["count"]) for r in rows})
        for r in rows:
            if vocab.index_of(r["token"]) != int(r["index"]):
                raise ValueError(f"{path}: index column inconsistent with count ordering at {r['token']!r}")
        return vocab


@dataclass(frozen=True)
class PhraseTable:
    """Scored collocations. Keys are tuples of 2 or 3 component tokens."""

    entries: dict[tuple[str, ...], float] = field(default_factory=dict)
    threshold: float = 0.3
    min_count: int = 5

    def __contains__(self, key: tuple[str, ...]) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def union(self, other: "PhraseTable") -> "PhraseTable":
        merged = dict(self.entries)
        merged.update(other.entries)
        return PhraseTable(merged, min(self.threshold, other.threshold), min(self.min_count, other.min_count))

    @classmethod
    def from_phrases(cls, phrases: Iterable[str]) -> "PhraseTable":
        """Build a table from user-supplied phrases such as ``"regular basis"``."""
        entries = {}
        for p in phrases:
            parts = tuple(p.replace("-", " ").split())
            if len(parts) not in (2, 3):
                raise ValueError(f"phrase {p!r} must have 2 or 3 words")
            entries[parts] = 1.0
        return cls(entries, threshold=1.0, min_count=1)

    def to_csv(self, path: str | Path) -> None:
        """phrase,score rows (phrase joined by "-"), sorted by phrase."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phrase", "score"])
            for key in sorted(self.entries):
                w.writerow(["-".join(key), repr(float(self.entries[key]))])


# --------------------------------------------------------------------------
# cleaning and tokenizing

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_BULLETS = "•◦▪▫●○‣⁃∙·➢►▸–—"
_BULLET_RE = re.compile("[" + re.escape(_BULLETS) + "]")
_LINE_BULLET = re.compile(r"(?m)^\s*(?:[-*>]+|\d+[.)])\s+")
_REPEAT_PUNCT = re.compile(r"([^\w\s])\1+")
_WS = re.compile(r"\s+")
_TOKEN = re.compile(r"[^\W_]+(?:['’\-][^\W_]+)*")
_APOS = re.compile(r"['’]")


def clean(text: str) -> str:
    """Strip bullets, URLs, control characters and repeated punctuation; lowercase."""
    text = unicodedata.normalize("NFKC", text)
    text = _URL.sub(" ", text)
    text = _LINE_BULLET.sub(" ", text)
    text = _BULLET_RE.sub(" ", text)
    text = "".join(" " if unicodedata.category(ch) in ("Cc", "Cf", "Co", "Cs") else ch for ch in text)
    text = _REPEAT_PUNCT.sub(r"\1", text)
    return _WS.sub(" ", text).strip().lower()


def tokenize(text: str) -> list[str]:
    """Split on non-alphanumerics, keeping intra-word hyphens and dropping apostrophes.

    Pure numbers are discarded.
    """
    out = []
    for m in _TOKEN.finditer(text):
        tok = _APOS.sub("", m.group(0))
        if tok.replace("-", "").isdigit():
            continue
        out.append(tok)
    return out


def load_stopwords(path: str | Path) -> frozenset[str]:
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                words.add(line.lower())
    return frozenset(words)


_DEFAULT_STOPWORDS: frozenset[str] | None = None


def default_stopwords() -> frozenset[str]:
    global _DEFAULT_STOPWORDS
    if _DEFAULT_STOPWORDS is None:
        with resources.as_file(resources.files("notesforge") / "data" / "stopwords.txt") as p:
            _DEFAULT_STOPWORDS = load_stopwords(p)
    return _DEFAULT_STOPWORDS


def remove_stopwords(tokens: Sequence[str], stoplist: frozenset[str] | set[str] | None = None) -> list[str]:
    stoplist = default_stopwords() if stoplist is None else stoplist
    return [t for t in tokens if t not in stoplist]


# --------------------------------------------------------------------------
# phrases


def _npmi(c_ab: int, c_a: int, c_b: int, n: int, eps: float) -> float:
    p_ab = c_ab / n + eps
    return math.log(p_ab / ((c_a / n) * (c_b / n))) / -math.log(p_ab)


def _score_pairs(docs: Sequence[Sequence[str]], min_count: int, threshold: float, eps: float):
    unigrams: Counter[str] = Counter()
    pairs: Counter[tuple[str, str]] = Counter()
    for toks in docs:
        unigrams.update(toks)
        pairs.update(zip(toks, toks[1:]))
    n = sum(unigrams.values())
    for (a, b), c_ab in sorted(pairs.items()):
        if c_ab < min_count or unigrams[a] < min_count or unigrams[b] < min_count:
            continue
        score = _npmi(c_ab, unigrams[a], unigrams[b], n, eps)
        if score >= threshold:
            yield (a, b), score


def mine_phrases(
    docs: Sequence[TokenDoc] | Sequence[Sequence[str]],
    min_count: int = 5,
    threshold: float = 0.3,
    eps: float = 1e-12,
) -> PhraseTable:
    """Find bigrams by NPMI, then trigrams from a second pass over bigram-merged docs.

    The second pass treats merged bigrams as single tokens; a trigram is kept
    when a merged bigram and an adjacent plain token score above threshold.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    seqs = [d.tokens if isinstance(d, TokenDoc) else tuple(d) for d in docs]
    bigrams = dict(_score_pairs(seqs, min_count, threshold, eps))
    table = PhraseTable(bigrams, threshold, min_count)
    if not bigrams:
        return table

    # second pass: merged tokens carry their components so trigrams can be rebuilt
    merged_docs = []
    parts: dict[str, tuple[str, ...]] = {}
    for toks in seqs:
        out = []
        for unit in _greedy_merge(toks, table):
            key = "-".join(unit)
            parts[key] = unit
            out.append(key)
        merged_docs.append(out)
    trigrams = {}
    for (a, b), score in _score_pairs(merged_docs, min_count, threshold, eps):
        combined = parts.get(a, (a,)) + parts.get(b, (b,))
        if len(combined) == 3:
            trigrams[combined] = score
    entries = dict(bigrams)
    entries.update(trigrams)
    return PhraseTable(entries, threshold, min_count)


def _greedy_merge(tokens: Sequence[str], table: PhraseTable) -> list[tuple[str, ...]]:
    units = []
    i, n = 0, len(tokens)
    while i < n:
        if i + 2 < n and tuple(tokens[i : i + 3]) in table.entries:
            units.append(tuple(tokens[i : i + 3]))
            i += 3
        elif i + 1 < n and (tokens[i], tokens[i + 1]) in table.entries:
            units.append((tokens[i], tokens[i + 1]))
            i += 2
        else:
            units.append((tokens[i],))
            i += 1
    return units


def apply_phrases(doc: TokenDoc | Sequence[str], table: PhraseTable) -> TokenDoc | list[str]:
    """Greedy left-to-right longest-match merge; components joined by ``-``."""
    toks = doc.tokens if isinstance(doc, TokenDoc) else doc
    merged = ["-".join(u) for u in _greedy_merge(toks, table)]
    if isinstance(doc, TokenDoc):
        return TokenDoc(doc.note_id, merged)
    return merged


# --------------------------------------------------------------------------
# lemmatization

_VOWELS = set("aeiou")
_LEXICON: dict[str, str] | None = None


def _lexicon() -> dict[str, str]:
    global _LEXICON
    if _LEXICON is None:
        lex = {}
        with resources.as_file(resources.files("notesforge") / "data" / "lemma_exceptions.txt") as p:
            for line in p.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                form, lemma = line.split()
                lex[form] = lemma
        _LEXICON = lex
    return _LEXICON


def _has_vowel(s: str) -> bool:
    return any(ch in _VOWELS for ch in s) or (len(s) > 1 and "y" in s[1:])


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of VC sequences in ``stem`` (the Porter measure)."""
    forms = "".join("c" if _is_consonant(stem, i) else "v" for i in range(len(stem)))
    collapsed = re.sub(r"(.)\1+", r"\1", forms)
    return collapsed.count("vc")


def _ends_cvc(stem: str) -> bool:
    if len(stem) < 3:
        return False
    return (
        _is_consonant(stem, len(stem) - 3)
        and not _is_consonant(stem, len(stem) - 2)
        and _is_consonant(stem, len(stem) - 1)
        and stem[-1] not in "wxy"
    )


def _restore_stem(stem: str) -> str:
    # doubled final consonant: planned -> plan, but discussed -> discuss, added -> add
    if len(stem) >= 4 and stem[-1] == stem[-2] and stem[-1] not in "lsz" and _is_consonant(stem, len(stem) - 1):
        return stem[:-1]
    if stem.endswith(("at", "bl", "iz")):
        return stem + "e"
    if _measure(stem) == 1 and _ends_cvc(stem):
        return stem + "e"
    return stem


def _strip_once(word: str) -> str:
    if len(word) > 4 and word.endswith("ies"):
        return word[:-3] + "y"
    if len(word) > 4 and word.endswith("ied"):
        return word[:-3] + "y"
    if word.endswith("sses"):
        return word[:-2]
    if len(word) > 4 and word.endswith(("shes", "ches", "xes", "zes")):
        return word[:-2]
    if word.endswith("eed"):
        stem = word[:-3]
        return stem + "ee" if _measure(stem) > 0 else word
    if word.endswith("ed"):
        stem = word[:-2]
        if len(stem) >= 3 and _has_vowel(stem):
            return _restore_stem(stem)
        return word
    if word.endswith("ing"):
        stem = word[:-3]
        if len(stem) >= 3 and _has_vowel(stem):
            return _restore_stem(stem)
        return word
    if len(word) > 3 and word.endswith("s") and not word.endswith(("ss", "us", "is")):
        return word[:-1]
    return word


def _lemmatize_word(word: str) -> str:
    lex = _lexicon()
    for _ in range(8):
        if word in lex:
            return lex[word]
        nxt = _strip_once(word)
        if nxt == word:
            return word
        word = nxt
    return word


def lemmatize(token: str) -> str:
    """Map an inflected form to its lemma.

    The exception lexicon is consulted first, then suffix rules are applied
    until the form stops changing, which makes the function idempotent.
    For hyphenated tokens only the final component (the head) is lemmatized.
    """
    if "-" in token:
        head, _, last = token.rpartition("-")
        if not last:
            return token
        return f"{head}-{_lemmatize_word(last)}"
    if not token.isalpha():
        return token
    return _lemmatize_word(token)


# --------------------------------------------------------------------------
# full pipeline


@dataclass
class PreprocessConfig:
    stopwords: frozenset[str] | None = None
    phrase_min_count: int = 5
    phrase_threshold: float = 0.3
    phrase_eps: float = 1e-12
    vocab_min_count: int = 1
    extra_phrases: PhraseTable | None = None
    mine: bool = True


def _check_unique(notes: Sequence[RawNote]) -> None:
    seen: Counter[str] = Counter(n.note_id for n in notes)
    dups = sorted(k for k, v in seen.items() if v > 1)
    if dups:
        raise DuplicateNoteError(dups)


def preprocess(
    notes: Sequence[RawNote], config: PreprocessConfig | None = None
) -> tuple[list[TokenDoc], Vocabulary, PhraseTable]:
    """Run the four-step pipeline over ``notes``.

    Returns the token documents (one per note, in input order, possibly
    empty), the pruned vocabulary, and the phrase table that was applied.
    Documents only contain tokens retained in the vocabulary.
    """
    config = config or PreprocessConfig()
    _check_unique(notes)
    stop = default_stopwords() if config.stopwords is None else config.stopwords

    stage = [remove_stopwords(tokenize(clean(n.text)), stop) for n in notes]
    table = PhraseTable({}, config.phrase_threshold, config.phrase_min_count)
    if config.mine and stage:
        table = mine_phrases(stage, config.phrase_min_count, config.phrase_threshold, config.phrase_eps)
    if config.extra_phrases is not None:
        table = table.union(config.extra_phrases)

    cache: dict[str, str] = {}
    docs = []
    for note, toks in zip(notes, stage):
        out = []
        for tok in apply_phrases(toks, table):
            lem = cache.get(tok)
            if lem is None:
                lem = cache[tok] = lemmatize(tok)
            out.append(lem)
        docs.append(TokenDoc(note.note_id, out))

    vocab = Vocabulary.from_docs(docs, config.vocab_min_count)
    if config.vocab_min_count > 1:
        docs = [TokenDoc(d.note_id, [t for t in d.tokens if t in vocab]) for d in docs]
    return docs, vocab, table


# --------------------------------------------------------------------------
# descriptive statistics


@dataclass
class StatsReport:
    monthly_counts: list[tuple[str, int, int, float]]
    """(month, notes, advisors, notes per advisor)"""
    advisor_monthly: list[tuple[str, str, int]]
    note_length_hist: list[tuple[int, int, int]]
    """(bin lower edge, bin upper edge exclusive, count)"""
    advisor_avg_length_hist: list[tuple[int, int, int]]
    empty_notes: list[str]

    def write(self, outdir: str | Path) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_rows(outdir / "monthly_counts.csv", ["month", "notes", "advisors", "notes_per_advisor"], self.monthly_counts)
        _write_rows(outdir / "advisor_monthly_counts.csv", ["month", "advisor_id", "notes"], self.advisor_monthly)
        _write_rows(outdir / "note_length_hist.csv", ["bin_start", "bin_end", "count"], self.note_length_hist)
        _write_rows(outdir / "advisor_avg_length_hist.csv", ["bin_start", "bin_end", "count"], self.advisor_avg_length_hist)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def note_length(text: str) -> int:
    """Characters excluding whitespace."""
    return sum(1 for ch in text if not ch.isspace())


def _histogram(values: Sequence[float], bin_width: int) -> list[tuple[int, int, int]]:
    if not values:
        return []
    counts: Counter[int] = Counter(int(v // bin_width) for v in values)
    top = max(counts)
    return [(b * bin_width, (b + 1) * bin_width, counts.get(b, 0)) for b in range(top + 1)]


def corpus_stats(notes: Sequence[RawNote], bin_width: int = 50) -> StatsReport:
    per_month: Counter[str] = Counter()
    per_adv_month: Counter[tuple[str, str]] = Counter()
    lengths = []
    adv_lengths: dict[str, list[int]] = {}
    for n in notes:
        month = n.timestamp.strftime("%Y-%m")
        per_month[month] += 1
        per_adv_month[(month, n.advisor_id)] += 1
        length = note_length(n.text)
        lengths.append(length)
        adv_lengths.setdefault(n.advisor_id, []).append(length)

    monthly = []
    for month in sorted(per_month):
        advisors = sum(1 for (m, _) in per_adv_month if m == month)
        monthly.append((month, per_month[month], advisors, per_month[month] / advisors))
    adv_monthly = [(m, a, c) for (m, a), c in sorted(per_adv_month.items())]
    avg = [sum(v) / len(v) for _, v in sorted(adv_lengths.items())]
    return StatsReport(
        monthly_counts=monthly,
        advisor_monthly=adv_monthly,
        note_length_hist=_histogram(lengths, bin_width),
        advisor_avg_length_hist=_histogram(avg, bin_width),
        empty_notes=[n.note_id for n in notes if n.is_empty],
    )


# --------------------------------------------------------------------------
# file formats


def read_notes(path: str | Path) -> list[RawNote]:
    notes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise NoteSchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            notes.append(RawNote.from_dict(obj))
    return notes


def write_notes(notes: Iterable[RawNote], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for n in notes:
            fh.write(json.dumps(n.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def write_corpus(docs: Iterable[TokenDoc], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in docs:
            fh.write(json.dumps({"note_id": d.note_id, "tokens": list(d.tokens)}, ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> list[TokenDoc]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                docs.append(TokenDoc(str(obj["note_id"]), [str(t) for t in obj["tokens"]]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise NoteSchemaError(f"{path}:{lineno}: malformed corpus record") from exc
    return docs
