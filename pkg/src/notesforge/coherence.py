"""C_v topic coherence over boolean sliding windows, and the topic-count scan.

Windows never cross document boundaries. A document shorter than the window
contributes one window holding the whole document; empty documents
contribute nothing.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import topicmodel
from .corpus import TokenDoc, Vocabulary

__all__ = [
    "CoherenceConfig",
    "WindowCounts",
    "count_windows",
    "npmi",
    "c_v",
    "ScanResult",
    "scan_topics",
    "write_curve",
    "read_curve",
]


@dataclass(frozen=True)
class CoherenceConfig:
    window_size: int = 110
    top_n: int = 10
    epsilon: float = 1e-12
    gamma: float = 1.0

    def __post_init__(self):
        if self.window_size < 2:
            raise ValueError("window_size must be >= 2")
        if self.top_n < 2:
            raise ValueError("top_n must be >= 2")


@dataclass
class WindowCounts:
    """Window frequencies restricted to a tracked token set.

    ``token_counts[i]`` is the number of windows containing ``tokens[i]`` and
    ``pair_counts[i, j]`` the number containing both (diagonal = token count).
    """

    total: int
    tokens: list[str]
    token_counts: np.ndarray
    pair_counts: np.ndarray
    window_size: int
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {t: i for i, t in enumerate(self.tokens)}

    def __contains__(self, token: str) -> bool:
        i = self._index.get(token)
        return i is not None and self.token_counts[i] > 0

    def count(self, token: str) -> int:
        i = self._index.get(token)
        return 0 if i is None else int(self.token_counts[i])

    def pair(self, a: str, b: str) -> int:
        i, j = self._index.get(a), self._index.get(b)
        if i is None or j is None:
            return 0
        return int(self.pair_counts[i, j])


def _doc_windows(n: int, window_size: int) -> int:
    if n == 0:
        return 0
    return 1 if n <= window_size else n - window_size + 1


def count_windows(
    corpus: Sequence[TokenDoc], window_size: int = 110, tokens: Iterable[str] | None = None
) -> WindowCounts:
    """Boolean window counts for ``tokens`` (all corpus tokens when omitted).

    Pair counts are dense over the tracked set, so restrict ``tokens`` to the
    words being scored when the vocabulary is large.
    """
    if window_size < 2:
        raise ValueError("window_size must be >= 2")
    if tokens is None:
        tracked = sorted({t for d in corpus for t in d.tokens})
    else:
        tracked = sorted(set(tokens))
    index = {t: i for i, t in enumerate(tracked)}
    m = len(tracked)
    token_counts = np.zeros(m, dtype=np.int64)
    pair_counts = np.zeros((m, m), dtype=np.int64)
    total = 0

    # Short documents are one window each: stack their presence rows.
    short_rows = []
    for doc in corpus:
        n = len(doc.tokens)
        nw = _doc_windows(n, window_size)
        total += nw
        if nw == 0:
            continue
        if nw == 1:
            row = sorted({index[t] for t in doc.tokens if t in index})
            if row:
                short_rows.append(row)
            continue
        # Long document: token occurrence at p lies in windows [p - s + 1, p] clipped.
        diff: dict[int, np.ndarray] = {}
        for p, t in enumerate(doc.tokens):
            i = index.get(t)
            if i is None:
                continue
            arr = diff.get(i)
            if arr is None:
                arr = diff[i] = np.zeros(nw + 1, dtype=np.int64)
            arr[max(0, p - window_size + 1)] += 1
            arr[min(p, nw - 1) + 1] -= 1
        if not diff:
            continue
        ids = sorted(diff)
        ind = np.array([np.cumsum(diff[i][:-1]) > 0 for i in ids], dtype=np.int64)
        sub = np.ix_(ids, ids)
        pair_counts[sub] += ind @ ind.T
        token_counts[ids] += ind.sum(axis=1)

    if short_rows:
        for start in range(0, len(short_rows), 20000):
            chunk = short_rows[start : start + 20000]
            pres = np.zeros((len(chunk), m), dtype=np.float64)
            for r, row in enumerate(chunk):
                pres[r, row] = 1.0
            token_counts += pres.sum(axis=0).astype(np.int64)
            pair_counts += np.rint(pres.T @ pres).astype(np.int64)
    return WindowCounts(total, tracked, token_counts, pair_counts, window_size)


def npmi(counts: WindowCounts, w1: str, w2: str, epsilon: float = 1e-12) -> float:
    """Normalized PMI of two tracked words from window probabilities."""
    for w in (w1, w2):
        if counts.count(w) == 0:
            raise KeyError(f"word {w!r} has zero window count")
    n = counts.total
    p1, p2 = counts.count(w1) / n, counts.count(w2) / n
    p12 = counts.pair(w1, w2) / n + epsilon
    if p12 >= 1.0:
        return 1.0
    return math.log(p12 / (p1 * p2)) / -math.log(p12)


def c_v(topic_words: Sequence[str], counts: WindowCounts, config: CoherenceConfig | None = None) -> float:
    """C_v: mean cosine between each word's NPMI context vector and the set's summed vector.

    Words absent from ``counts`` are dropped; duplicates count once. The words
    are processed in sorted order so the score depends only on the word set.
    """
    config = config or CoherenceConfig()
    words = sorted({w for w in topic_words if w in counts})
    if len(words) < 2:
        raise ValueError(f"need at least 2 distinct words with window counts, got {words!r}")
    m = len(words)
    vec = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            vec[i, j] = vec[j, i] = npmi(counts, words[i], words[j], config.epsilon)
    if config.gamma != 1.0:
        vec = np.sign(vec) * np.abs(vec) ** config.gamma
    total = vec.sum(axis=0)
    total_norm = np.linalg.norm(total)
    sims = []
    for i in range(m):
        denom = np.linalg.norm(vec[i]) * total_norm
        sims.append(float(vec[i] @ total / denom) if denom > 0 else 0.0)
    return float(np.mean(sims))


@dataclass
class ScanResult:
    curve: list[tuple[int, float, list[float]]]
    best_k: int
    models: dict[int, topicmodel.LdaModel] = field(default_factory=dict, repr=False)

    def mean_scores(self) -> dict[int, float]:
        return {k: m for k, m, _ in self.curve}


def scan_topics(
    corpus: Sequence[TokenDoc],
    vocab: Vocabulary,
    k_values: Sequence[int],
    lda_config: topicmodel.LdaConfig | None = None,
    coh_config: CoherenceConfig | None = None,
    *,
    keep_models: bool = False,
) -> ScanResult:
    """Fit one LDA per k and score the mean C_v over its topics.

    ``lda_config`` is a template: its k is replaced, and alpha is left at the
    50/k default unless set explicitly. Ties in the curve go to the smallest k.
    """
    if not k_values:
        raise ValueError("k_values must be nonempty")
    template = lda_config or topicmodel.LdaConfig()
    coh_config = coh_config or CoherenceConfig()
    fitted = {}
    for k in sorted(set(k_values)):
        try:
            fitted[k] = topicmodel.fit(corpus, vocab, replace(template, k=k))
        except Exception as exc:
            raise RuntimeError(f"LDA fit failed for k={k}: {exc}") from exc
    top = {k: [topicmodel.top_words(m, t, coh_config.top_n) for t in range(k)] for k, m in fitted.items()}
    tracked = {w for lists in top.values() for words in lists for w in words}
    counts = count_windows(corpus, coh_config.window_size, tracked)

    curve = []
    for k in sorted(fitted):
        try:
            per_topic = [c_v(words, counts, coh_config) for words in top[k]]
        except Exception as exc:
            raise RuntimeError(f"coherence scoring failed for k={k}: {exc}") from exc
        curve.append((k, float(np.mean(per_topic)), per_topic))
    best = max(curve, key=lambda row: (row[1], -row[0]))[0]
    return ScanResult(curve, best, fitted if keep_models else {})


def write_curve(result: ScanResult, path: str | Path) -> None:
    """coherence_curve.csv: k, mean_cv, cv_0 ... cv_{kmax-1} (blank past k), floats as repr."""
    width = max(k for k, _, _ in result.curve)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "mean_cv"] + [f"cv_{t}" for t in range(width)] + ["selected"])
        for k, mean, per in result.curve:
            cells = [repr(float(v)) for v in per] + [""] * (width - len(per))
            w.writerow([k, repr(float(mean))] + cells + [int(k == result.best_k)])


def read_curve(path: str | Path) -> ScanResult:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    curve, best = [], None
    for r in rows:
        k = int(r["k"])
        per = [float(r[f"cv_{t}"]) for t in range(k)]
        curve.append((k, float(r["mean_cv"]), per))
        if r["selected"] == "1":
            best = k
    return ScanResult(curve, best)
