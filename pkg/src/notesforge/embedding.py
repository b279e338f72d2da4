"""Skip-gram word embeddings trained with negative sampling (SGNS).

Training is plain SGD over (center, context) pairs in corpus order with a
fixed window, negatives drawn from the unigram distribution raised to 0.75,
and a learning rate decaying linearly from ``lr_initial`` to ``lr_final``.
All randomness comes from one splitmix64 stream, so a single-threaded run is
reproducible bit for bit.
"""
from __future__ import annotations

import json
import math
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numba as nb
import numpy as np

from ._rng import next_float, stream_seed
from .corpus import TokenDoc, Vocabulary

__all__ = [
    "EmbeddingConfig",
    "EmbeddingModel",
    "NoiseDistribution",
    "train",
    "cosine",
    "most_similar",
    "sgns_pair_loss",
    "sgns_pair_grads",
    "sgns_loss",
    "sample_pairs",
    "save",
    "load",
    "save_text",
    "load_text",
]

FORMAT_VERSION = 1


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 100
    window: int = 2
    min_count: int = 20
    negatives: int = 20
    epochs: int = 5
    lr_initial: float = 0.025
    lr_final: float = 1e-4
    ns_exponent: float = 0.75
    subsample: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("dim, window, negatives and epochs must all be >= 1")
        if not self.lr_final < self.lr_initial:
            raise ValueError("lr_final must be smaller than lr_initial")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")


@dataclass
class EmbeddingModel:
    vocab: Vocabulary
    input_vectors: np.ndarray
    output_vectors: np.ndarray
    config: EmbeddingConfig

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def vector(self, word: str) -> np.ndarray:
        if word not in self.vocab:
            raise KeyError(f"word {word!r} not in embedding vocabulary")
        return self.input_vectors[self.vocab.index_of(word)]

    def similarity(self, a: str, b: str) -> float:
        return cosine(self.vector(a), self.vector(b))


class NoiseDistribution:
    """Unigram counts raised to ``exponent``, sampled by inverse CDF."""

    def __init__(self, counts: Sequence[int], exponent: float = 0.75):
        weights = np.asarray(counts, dtype=np.float64) ** exponent
        self.probs = weights / weights.sum()
        self.cdf = np.cumsum(self.probs)
        self.cdf[-1] = 1.0

    def draw(self, n: int, seed: int = 0) -> np.ndarray:
        states = np.array([stream_seed(seed, "noise")], dtype=np.uint64)
        return _draw_many(self.cdf, n, states)


@nb.njit(cache=True)
def _draw(cdf, states):
    u = next_float(states, 0)
    lo, hi = 0, cdf.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@nb.njit(cache=True)
def _draw_many(cdf, n, states):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = _draw(cdf, states)
    return out


# --------------------------------------------------------------------------
# objective


@nb.njit(cache=True)
def _log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@nb.njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@nb.njit(cache=True)
def sgns_pair_loss(v, u_o, u_neg):
    """-log sigmoid(u_o . v) - sum_i log sigmoid(-u_neg[i] . v)."""
    loss = -_log_sigmoid(np.dot(u_o, v))
    for i in range(u_neg.shape[0]):
        loss -= _log_sigmoid(-np.dot(u_neg[i], v))
    return loss


@nb.njit(cache=True)
def sgns_pair_grads(v, u_o, u_neg):
    """Gradients of ``sgns_pair_loss`` with respect to (v, u_o, u_neg)."""
    g = _sigmoid(np.dot(u_o, v)) - 1.0
    dv = g * u_o
    du_o = g * v
    du_neg = np.empty_like(u_neg)
    for i in range(u_neg.shape[0]):
        gn = _sigmoid(np.dot(u_neg[i], v))
        dv = dv + gn * u_neg[i]
        du_neg[i] = gn * v
    return dv, du_o, du_neg


# --------------------------------------------------------------------------
# training kernel


@nb.njit(cache=True)
def _train_epoch(words, offsets, win, W_in, W_out, cdf, n_neg, keep_prob, states,
                 lr0, lr1, done, total, neu1e):
    dim = W_in.shape[1]
    for d in range(offsets.shape[0] - 1):
        a, b = offsets[d], offsets[d + 1]
        for p in range(a, b):
            done += 1
            c = words[p]
            if keep_prob[c] < 1.0 and next_float(states, 0) >= keep_prob[c]:
                continue
            lr = lr0 - (lr0 - lr1) * (done / total)
            lo = max(a, p - win)
            hi = min(b, p + win + 1)
            for q in range(lo, hi):
                if q == p:
                    continue
                o = words[q]
                for j in range(dim):
                    neu1e[j] = 0.0
                # positive pair
                dot = 0.0
                for j in range(dim):
                    dot += W_in[c, j] * W_out[o, j]
                g = (1.0 - _sigmoid(dot)) * lr
                for j in range(dim):
                    neu1e[j] += g * W_out[o, j]
                    W_out[o, j] += g * W_in[c, j]
                # noise words
                for _ in range(n_neg):
                    nw = _draw(cdf, states)
                    if nw == o:
                        continue
                    dot = 0.0
                    for j in range(dim):
                        dot += W_in[c, j] * W_out[nw, j]
                    g = -_sigmoid(dot) * lr
                    for j in range(dim):
                        neu1e[j] += g * W_out[nw, j]
                        W_out[nw, j] += g * W_in[c, j]
                for j in range(dim):
                    W_in[c, j] += neu1e[j]
    return done


def _encode(corpus: Sequence[TokenDoc], vocab: Vocabulary):
    seqs = [[vocab.index_of(t) for t in d.tokens if t in vocab] for d in corpus]
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum([len(s) for s in seqs], out=offsets[1:])
    words = np.fromiter((w for s in seqs for w in s), dtype=np.int64, count=int(offsets[-1]))
    return words, offsets


def train(
    corpus: Sequence[TokenDoc],
    config: EmbeddingConfig | None = None,
    *,
    callback: Callable[[int, "EmbeddingModel"], None] | None = None,
) -> EmbeddingModel:
    """Train SGNS vectors. ``callback(epoch, model)`` runs after each epoch."""
    config = config or EmbeddingConfig()
    vocab = Vocabulary.from_docs(corpus, config.min_count)
    if len(vocab) == 0:
        raise ValueError(f"no token reaches min_count={config.min_count}")
    words, offsets = _encode(corpus, vocab)
    V, dim = len(vocab), config.dim

    init = np.random.default_rng(int(stream_seed(config.seed, "init")))
    W_in = (init.random((V, dim)) - 0.5) / dim
    W_out = np.zeros((V, dim))
    noise = NoiseDistribution(vocab.counts, config.ns_exponent)
    counts = np.asarray(vocab.counts, dtype=np.float64)
    if config.subsample:
        freq = counts / counts.sum()
        keep = np.minimum(1.0, np.sqrt(config.subsample / freq) + config.subsample / freq)
    else:
        keep = np.ones(V)
    states = np.array([stream_seed(config.seed, "train")], dtype=np.uint64)
    neu1e = np.zeros(dim)
    total = float(max(1, words.shape[0] * config.epochs))
    done = 0
    model = EmbeddingModel(vocab, W_in, W_out, config)
    for epoch in range(1, config.epochs + 1):
        done = _train_epoch(words, offsets, config.window, W_in, W_out, noise.cdf, config.negatives,
                            keep, states, config.lr_initial, config.lr_final, done, total, neu1e)
        if callback is not None:
            callback(epoch, model)
    if not (np.isfinite(W_in).all() and np.isfinite(W_out).all()):
        raise FloatingPointError("training diverged: non-finite vectors")
    return model


def sample_pairs(corpus: Sequence[TokenDoc], vocab: Vocabulary, window: int, n: int, seed: int = 0) -> np.ndarray:
    """Up to ``n`` (center, context) index pairs drawn uniformly from the corpus."""
    pairs = []
    for d in corpus:
        ids = [vocab.index_of(t) for t in d.tokens if t in vocab]
        for p, c in enumerate(ids):
            for q in range(max(0, p - window), min(len(ids), p + window + 1)):
                if q != p:
                    pairs.append((c, ids[q]))
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) > n:
        pick = np.random.default_rng(seed).choice(len(pairs), size=n, replace=False)
        pairs = pairs[np.sort(pick)]
    return pairs


def sgns_loss(model: EmbeddingModel, pairs: np.ndarray, negatives: np.ndarray) -> float:
    """Mean SGNS negative log-likelihood of ``pairs`` against fixed noise words.

    ``negatives`` has shape (len(pairs), n_neg).
    """
    v = model.input_vectors[pairs[:, 0]]
    u = model.output_vectors[pairs[:, 1]]
    un = model.output_vectors[negatives]
    pos = np.einsum("ij,ij->i", u, v)
    neg = np.einsum("ikj,ij->ik", un, v)
    loss = np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum(axis=1)
    return float(loss.mean())


# --------------------------------------------------------------------------
# queries


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb_ = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb_ == 0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb_), -1.0, 1.0))


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return np.divide(mat, norms, out=np.zeros_like(mat), where=norms > 0)


def similarities(model: EmbeddingModel, word: str) -> np.ndarray:
    """Cosine of ``word`` against every vocabulary word (input vectors)."""
    q = model.vector(word)
    if not np.linalg.norm(q) > 0:
        raise ValueError(f"word {word!r} has a zero vector")
    return np.clip(_unit_rows(model.input_vectors) @ (q / np.linalg.norm(q)), -1.0, 1.0)


def most_similar(model: EmbeddingModel, word: str, k: int = 10) -> list[tuple[str, float]]:
    """Top ``k`` neighbours by cosine, excluding ``word``; ties in lexicographic order."""
    if word not in model.vocab:
        raise KeyError(f"word {word!r} not in embedding vocabulary")
    if k <= 0:
        return []
    sims = similarities(model, word)
    qi = model.vocab.index_of(word)
    tokens = model.vocab.tokens
    order = sorted((i for i in range(len(tokens)) if i != qi), key=lambda i: (-sims[i], tokens[i]))
    return [(tokens[i], float(sims[i])) for i in order[:k]]


# --------------------------------------------------------------------------
# persistence


def save(model: EmbeddingModel, path: str | Path) -> None:
    """Full binary container (.npz): both vector tables, vocabulary counts and config."""
    path = Path(path)
    header = {"format_version": FORMAT_VERSION, "config": asdict(model.config)}
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            tokens=np.array(model.vocab.tokens),
            counts=np.asarray(model.vocab.counts, dtype=np.int64),
            input_vectors=model.input_vectors,
            output_vectors=model.output_vectors,
        )


def load(path: str | Path, expected_dim: int | None = None) -> EmbeddingModel:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            tokens = [str(t) for t in z["tokens"]]
            counts = z["counts"].tolist()
            W_in, W_out = z["input_vectors"].copy(), z["output_vectors"].copy()
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as exc:
        raise ValueError(f"{path}: not a readable embedding container ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header.get('format_version')!r}")
    config = EmbeddingConfig(**header["config"])
    if W_in.shape != (len(tokens), config.dim) or W_out.shape != W_in.shape:
        raise ValueError(f"{path}: vector tables do not match vocabulary size and dim")
    if expected_dim is not None and config.dim != expected_dim:
        raise ValueError(f"{path}: dim {config.dim} != expected {expected_dim}")
    vocab = Vocabulary(dict(zip(tokens, counts)))
    if vocab.tokens != tokens:
        raise ValueError(f"{path}: token order inconsistent with counts")
    return EmbeddingModel(vocab, W_in, W_out, config)


def save_text(model: EmbeddingModel, path: str | Path) -> None:
    """Word-vector text format: ``V dim`` header then ``token x1 ... xdim`` lines."""
    V, dim = model.input_vectors.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{V} {dim}\n")
        for tok, row in zip(model.vocab.tokens, model.input_vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_text(path: str | Path, expected_dim: int | None = None) -> tuple[list[str], np.ndarray]:
    """Read the text format. Returns (tokens, input vectors)."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise ValueError(f"{path}: bad header")
        V, dim = int(head[0]), int(head[1])
        if expected_dim is not None and dim != expected_dim:
            raise ValueError(f"{path}: dim {dim} != expected {expected_dim}")
        tokens, rows = [], []
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values")
            tokens.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(tokens) != V:
        raise ValueError(f"{path}: header announces {V} vectors, found {len(tokens)}")
    return tokens, np.array(rows, dtype=np.float64).reshape(V, dim)
