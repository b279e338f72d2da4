"""Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.

Documents are swept in note_id order and every document owns its own random
stream keyed by ``(seed, note_id)``, so a fit does not depend on the order in
which documents are passed in: permuting the input permutes theta rows and
nothing else.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numba as nb
import numpy as np

from ._rng import next_float, stream_seed, stream_states
from .corpus import TokenDoc, Vocabulary

__all__ = [
    "LdaConfig",
    "LdaModel",
    "OutOfVocabularyWarning",
    "fit",
    "top_words",
    "dominant_topic",
    "infer_doc",
    "conditional",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1


class OutOfVocabularyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LdaConfig:
    k: int = 20
    alpha: float | None = None  # defaults to 50 / k
    beta: float = 0.01
    iterations: int = 1000
    burn_in: int = 200
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.beta <= 0 or (self.alpha is not None and self.alpha <= 0):
            raise ValueError("priors must be positive")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def alpha_value(self) -> float:
        return 50.0 / self.k if self.alpha is None else float(self.alpha)


@dataclass
class LdaModel:
    config: LdaConfig
    vocab: Vocabulary
    note_ids: list[str]
    topic_word_counts: np.ndarray  # (k, V) int64, final sweep
    doc_topic_counts: np.ndarray  # (D, k) int64, final sweep
    assignments: list[np.ndarray] | None  # per doc, topic id per position
    phi: np.ndarray  # (k, V)
    theta: np.ndarray  # (D, k)

    @property
    def k(self) -> int:
        return self.phi.shape[0]

    @property
    def n_docs(self) -> int:
        return self.theta.shape[0]


# --------------------------------------------------------------------------
# kernels


def conditional(n_dt: np.ndarray, n_tw: np.ndarray, n_t: np.ndarray, alpha: float, beta: float, V: int) -> np.ndarray:
    """Normalized P(z = t | rest) for one token with its own count removed."""
    w = (n_dt + alpha) * (n_tw + beta) / (n_t + V * beta)
    return w / w.sum()


@nb.njit(cache=True)
def _init(words, offsets, order, z, ndt, ntw, nt, states, k):
    for d in order:
        for i in range(offsets[d], offsets[d + 1]):
            t = int(next_float(states, d) * k)
            if t >= k:
                t = k - 1
            z[i] = t
            ndt[d, t] += 1
            ntw[t, words[i]] += 1
            nt[t] += 1


@nb.njit(cache=True)
def _sweep(words, offsets, order, z, ndt, ntw, nt, states, alpha, beta, vbeta, k):
    p = np.empty(k)
    for d in order:
        for i in range(offsets[d], offsets[d + 1]):
            w = words[i]
            t = z[i]
            ndt[d, t] -= 1
            ntw[t, w] -= 1
            nt[t] -= 1
            total = 0.0
            for s in range(k):
                total += (ndt[d, s] + alpha) * (ntw[s, w] + beta) / (nt[s] + vbeta)
                p[s] = total
            u = next_float(states, d) * total
            t = 0
            while t < k - 1 and p[t] <= u:
                t += 1
            z[i] = t
            ndt[d, t] += 1
            ntw[t, w] += 1
            nt[t] += 1


@nb.njit(cache=True)
def _fold_in(words, phi, alpha, sweeps, burn, states):
    k = phi.shape[0]
    n = words.shape[0]
    z = np.empty(n, dtype=np.int64)
    ndt = np.zeros(k)
    for i in range(n):
        t = int(next_float(states, 0) * k)
        if t >= k:
            t = k - 1
        z[i] = t
        ndt[t] += 1
    acc = np.zeros(k)
    samples = 0
    p = np.empty(k)
    for s in range(sweeps):
        for i in range(n):
            w = words[i]
            ndt[z[i]] -= 1
            total = 0.0
            for t in range(k):
                total += (ndt[t] + alpha) * phi[t, w]
                p[t] = total
            u = next_float(states, 0) * total
            t = 0
            while t < k - 1 and p[t] <= u:
                t += 1
            z[i] = t
            ndt[t] += 1
        if s >= burn:
            acc += ndt
            samples += 1
    return acc / samples


# --------------------------------------------------------------------------
# fitting


def _flatten(corpus: Sequence[TokenDoc], vocab: Vocabulary):
    lengths = np.array([len(d) for d in corpus], dtype=np.int64)
    offsets = np.zeros(len(corpus) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    words = np.empty(offsets[-1], dtype=np.int64)
    for j, doc in enumerate(corpus):
        for i, tok in enumerate(doc.tokens):
            if tok not in vocab:
                raise KeyError(f"token {tok!r} of note {doc.note_id!r} not in vocabulary")
            words[offsets[j] + i] = vocab.index_of(tok)
    return words, offsets, lengths


def _check_counts(words, offsets, z, ndt, ntw, nt, k) -> None:
    V = ntw.shape[1]
    doc_of = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    exp_ntw = np.zeros((k, V), dtype=np.int64)
    np.add.at(exp_ntw, (z, words), 1)
    exp_ndt = np.zeros_like(ndt)
    np.add.at(exp_ndt, (doc_of, z), 1)
    if not (np.array_equal(exp_ntw, ntw) and np.array_equal(exp_ndt, ndt)):
        raise AssertionError("count matrices disagree with assignments")
    if not np.array_equal(ntw.sum(axis=1), ndt.sum(axis=0)) or not np.array_equal(nt, ntw.sum(axis=1)):
        raise AssertionError("topic totals not conserved")
    if not np.array_equal(ndt.sum(axis=1), np.diff(offsets)):
        raise AssertionError("doc-topic rows do not match document lengths")


def fit(
    corpus: Sequence[TokenDoc],
    vocab: Vocabulary,
    config: LdaConfig | None = None,
    *,
    check_invariants: bool = False,
    callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> LdaModel:
    """Fit LDA by collapsed Gibbs sampling.

    phi and theta are computed from count matrices averaged over every
    ``thin``-th sweep after ``burn_in``. With ``check_invariants`` the count
    tallies are verified against the assignments after every sweep.
    ``callback(sweep, doc_topic_counts, topic_word_counts)`` is invoked after
    each sweep with live arrays that must not be modified.
    """
    config = config or LdaConfig()
    if not corpus:
        raise ValueError("cannot fit LDA on an empty corpus")
    ids = [d.note_id for d in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("note_id values must be unique")
    k, V, D = config.k, len(vocab), len(corpus)
    if V == 0:
        raise ValueError("vocabulary is empty")
    alpha, beta = config.alpha_value, config.beta

    words, offsets, lengths = _flatten(corpus, vocab)
    order = np.array(sorted(range(D), key=lambda j: ids[j]), dtype=np.int64)
    states = stream_states(config.seed, ids)
    z = np.zeros(words.shape[0], dtype=np.int64)
    ndt = np.zeros((D, k), dtype=np.int64)
    ntw = np.zeros((k, V), dtype=np.int64)
    nt = np.zeros(k, dtype=np.int64)
    _init(words, offsets, order, z, ndt, ntw, nt, states, k)
    if check_invariants:
        _check_counts(words, offsets, z, ndt, ntw, nt, k)

    acc_ndt = np.zeros((D, k))
    acc_ntw = np.zeros((k, V))
    samples = 0
    for sweep in range(1, config.iterations + 1):
        _sweep(words, offsets, order, z, ndt, ntw, nt, states, alpha, beta, V * beta, k)
        if check_invariants:
            _check_counts(words, offsets, z, ndt, ntw, nt, k)
        if sweep > config.burn_in and (sweep - config.burn_in) % config.thin == 0:
            acc_ndt += ndt
            acc_ntw += ntw
            samples += 1
        if callback is not None:
            callback(sweep, ndt, ntw)
    if samples == 0:
        acc_ndt, acc_ntw, samples = ndt.astype(float), ntw.astype(float), 1

    mean_ntw = acc_ntw / samples
    mean_ndt = acc_ndt / samples
    phi = (mean_ntw + beta) / (mean_ntw.sum(axis=1, keepdims=True) + V * beta)
    theta = (mean_ndt + alpha) / (lengths[:, None] + k * alpha)
    assignments = [z[offsets[j] : offsets[j + 1]].copy() for j in range(D)]
    return LdaModel(config, vocab, ids, ntw, ndt, assignments, phi, theta)


# --------------------------------------------------------------------------
# queries


def top_words(model: LdaModel, topic: int, n: int = 10) -> list[str]:
    """The ``n`` highest-probability tokens of ``topic``; ties in lexicographic order."""
    if not 0 <= topic < model.k:
        raise IndexError(f"topic {topic} out of range for k={model.k}")
    row = model.phi[topic]
    tokens = model.vocab.tokens
    ranked = sorted(range(len(tokens)), key=lambda w: (-row[w], tokens[w]))
    return [tokens[w] for w in ranked[: max(n, 0)]]


def dominant_topic(model: LdaModel, doc: int) -> tuple[int, float]:
    row = model.theta[doc]
    t = int(np.argmax(row))  # first maximum, i.e. lowest topic id on ties
    return t, float(row[t])


def infer_doc(model: LdaModel, doc: TokenDoc, sweeps: int = 50, seed: int = 0) -> np.ndarray:
    """Topic distribution for an unseen document by Gibbs fold-in against fixed phi.

    Out-of-vocabulary tokens are dropped. When nothing is left the prior
    (uniform) distribution is returned and an OutOfVocabularyWarning issued.
    """
    k = model.k
    ids = np.array([model.vocab.index_of(t) for t in doc.tokens if t in model.vocab], dtype=np.int64)
    if ids.size == 0:
        if doc.tokens:
            warnings.warn(f"note {doc.note_id!r}: no token in model vocabulary", OutOfVocabularyWarning, stacklevel=2)
        return np.full(k, 1.0 / k)
    alpha = model.config.alpha_value
    states = np.array([stream_seed(seed, doc.note_id)], dtype=np.uint64)
    sweeps = max(int(sweeps), 2)
    mean_counts = _fold_in(ids, model.phi, alpha, sweeps, sweeps // 2, states)
    return (mean_counts + alpha) / (ids.size + k * alpha)


# --------------------------------------------------------------------------
# persistence


def _write_matrix(path: Path, header: list[str], labels: list[str] | None, mat: np.ndarray, fmt) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(mat):
            cells = [fmt(v) for v in row]
            w.writerow(([labels[i]] if labels is not None else []) + cells)


def _read_matrix(path: Path, labelled: bool, dtype):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    labels = [r[0] for r in body] if labelled else None
    start = 1 if labelled else 0
    mat = np.array([[dtype(v) for v in r[start:]] for r in body], dtype=dtype)
    return header, labels, mat


def save_model(model: LdaModel, outdir: str | Path) -> None:
    """Write model.json, vocab.csv, phi.csv, theta.csv and the final count matrices.

    Reals are written with ``repr`` so that a reload is bit-exact.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    k, V, D = model.k, len(model.vocab), model.n_docs
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "alpha": model.config.alpha_value,
        "vocab_sha256": model.vocab.fingerprint(),
        "k": k,
        "V": V,
        "D": D,
    }
    (outdir / "model.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    model.vocab.to_csv(outdir / "vocab.csv")
    tokens = model.vocab.tokens
    topic_labels = [f"topic_{t}" for t in range(k)]
    _write_matrix(outdir / "phi.csv", ["topic"] + tokens, topic_labels, model.phi, lambda v: repr(float(v)))
    _write_matrix(outdir / "theta.csv", ["note_id"] + topic_labels, model.note_ids, model.theta, lambda v: repr(float(v)))
    _write_matrix(outdir / "topic_word_counts.csv", ["topic"] + tokens, topic_labels, model.topic_word_counts, str)
    _write_matrix(outdir / "doc_topic_counts.csv", ["note_id"] + topic_labels, model.note_ids, model.doc_topic_counts, str)


def load_model(outdir: str | Path) -> LdaModel:
    outdir = Path(outdir)
    header = json.loads((outdir / "model.json").read_text(encoding="utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported LDA model format {header.get('format_version')!r}")
    vocab = Vocabulary.from_csv(outdir / "vocab.csv")
    if vocab.fingerprint() != header["vocab_sha256"]:
        raise ValueError("vocabulary file does not match model header")
    config = LdaConfig(**header["config"])
    _, _, phi = _read_matrix(outdir / "phi.csv", True, float)
    _, note_ids, theta = _read_matrix(outdir / "theta.csv", True, float)
    _, _, ntw = _read_matrix(outdir / "topic_word_counts.csv", True, int)
    _, _, ndt = _read_matrix(outdir / "doc_topic_counts.csv", True, int)
    if phi.shape != (header["k"], header["V"]) or theta.shape != (header["D"], header["k"]):
        raise ValueError("matrix shapes disagree with model header")
    return LdaModel(config, vocab, note_ids, ntw.astype(np.int64), ndt.astype(np.int64), None, phi, theta)
