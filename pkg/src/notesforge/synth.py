"""Seeded synthetic data with planted ground truth.

Two generators live here. ``gen_topic_corpus`` follows the LDA generative
story with known topic vocabularies and is the reference for the topic-model
and coherence checks. ``gen_scenario`` simulates a client book: advisor notes
whose market-anxiety vocabulary tracks a latent per-client anxiety score,
a transaction ledger, a daily VIX series with calm and volatile regimes, and
cash-out labels driven by the same latent score.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import RawNote, write_notes

__all__ = [
    "TopicCorpusSpec",
    "TopicTruth",
    "gen_topic_corpus",
    "match_topics",
    "topic_purity",
    "token_purity",
    "ScenarioSpec",
    "Scenario",
    "gen_scenario",
    "write_scenario",
    "flag_cash_out",
    "calibrated_intercept",
    "VOLATILITY_WORDS",
    "PEACE_OF_MIND_WORDS",
    "MISSPELLINGS",
]

# --------------------------------------------------------------------------
# topic corpus


@dataclass(frozen=True)
class TopicCorpusSpec:
    n_topics: int = 5
    vocab_per_topic: int = 10
    shared_vocab: int = 30
    shared_weight: float = 0.3
    n_docs: int = 500
    doc_length: tuple[int, int] = (40, 80)
    concentration: float = 0.1
    single_topic: bool = False
    seed: int = 0

    def __post_init__(self):
        if min(self.n_topics, self.vocab_per_topic, self.n_docs, self.doc_length[0]) < 1:
            raise ValueError("topic corpus sizes must be >= 1")
        if self.doc_length[1] < self.doc_length[0]:
            raise ValueError("doc_length must be (min, max) with min <= max")
        if self.shared_vocab < 0 or not 0 <= self.shared_weight < 1:
            raise ValueError("invalid shared vocabulary settings")


@dataclass
class TopicTruth:
    topic_vocab: list[list[str]]
    shared_vocab: list[str]
    mixtures: np.ndarray  # (n_docs, n_topics)
    token_topics: list[np.ndarray]
    token_shared: list[np.ndarray]

    def topical_purity(self, assignments: Sequence[np.ndarray]) -> float:
        """Token purity over words drawn from topic vocabularies (shared words excluded)."""
        return token_purity(assignments, self.token_topics, [~s for s in self.token_shared], len(self.topic_vocab))


def _topic_word(t: int, j: int) -> str:
    return f"t{t}w{j:02d}"


def gen_topic_corpus(spec: TopicCorpusSpec) -> tuple[list[RawNote], TopicTruth]:
    """Draw documents from the LDA generative process with disjoint topic vocabularies.

    Each topic is uniform over its own ``vocab_per_topic`` words; when
    ``shared_vocab > 0`` every topic also puts ``shared_weight`` mass uniformly
    on a common pool. ``single_topic`` is the zero-concentration limit: each
    document draws exactly one topic.
    """
    rng = np.random.default_rng(spec.seed)
    K = spec.n_topics
    topic_vocab = [[_topic_word(t, j) for j in range(spec.vocab_per_topic)] for t in range(K)]
    shared = [f"sh{j:02d}" for j in range(spec.shared_vocab)]
    p_shared = spec.shared_weight if shared else 0.0

    notes, mixtures, token_topics, token_shared = [], [], [], []
    start = dt.date(2020, 1, 1)
    for d in range(spec.n_docs):
        if spec.single_topic or spec.concentration <= 0:
            mix = np.zeros(K)
            mix[rng.integers(K)] = 1.0
        else:
            mix = rng.dirichlet(np.full(K, spec.concentration))
        n = int(rng.integers(spec.doc_length[0], spec.doc_length[1] + 1))
        z = rng.choice(K, size=n, p=mix)
        use_shared = rng.random(n) < p_shared
        words = []
        for zi, sh in zip(z, use_shared):
            if sh:
                words.append(shared[rng.integers(len(shared))])
            else:
                words.append(topic_vocab[zi][rng.integers(spec.vocab_per_topic)])
        mixtures.append(mix)
        token_topics.append(z)
        token_shared.append(use_shared)
        notes.append(
            RawNote(
                note_id=f"doc{d:05d}",
                advisor_id=f"adv{d % 7}",
                client_id=f"cl{d:05d}",
                timestamp=start + dt.timedelta(days=int(rng.integers(0, 60))),
                text=" ".join(words),
            )
        )
    return notes, TopicTruth(topic_vocab, shared, np.array(mixtures), token_topics, token_shared)


def match_topics(phi: np.ndarray, vocab_tokens: Sequence[str], topic_vocab: Sequence[Sequence[str]]):
    """Greedy one-to-one matching of learned topics to planted topics.

    The score of a pair is the probability mass the learned topic puts on the
    planted topic's words. Returns ``(pairs, overlap)`` with pairs as
    ``(learned, planted)`` tuples sorted by learned id.
    """
    index = {t: i for i, t in enumerate(vocab_tokens)}
    overlap = np.zeros((phi.shape[0], len(topic_vocab)))
    for j, words in enumerate(topic_vocab):
        cols = [index[w] for w in words if w in index]
        if cols:
            overlap[:, j] = phi[:, cols].sum(axis=1)
    pairs = []
    used_l, used_t = set(), set()
    flat = sorted(
        ((overlap[l, t], l, t) for l in range(overlap.shape[0]) for t in range(overlap.shape[1])),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    for _, l, t in flat:
        if l in used_l or t in used_t:
            continue
        pairs.append((l, t))
        used_l.add(l)
        used_t.add(t)
    return sorted(pairs), overlap


def topic_purity(
    phi: np.ndarray, vocab_tokens: Sequence[str], topic_vocab: Sequence[Sequence[str]], ignore: Iterable[str] = ()
) -> float:
    """Mean planted-vocabulary mass over greedily matched topic pairs.

    Words in ``ignore`` (typically the shared pool) are removed and each
    phi row renormalized first; otherwise a perfectly recovered topic scores
    only its non-shared mass, ``1 - shared_weight``.
    """
    ignore = set(ignore)
    if ignore:
        keep = np.array([t not in ignore for t in vocab_tokens])
        phi = np.where(keep, phi, 0.0)
        phi = phi / phi.sum(axis=1, keepdims=True)
    pairs, overlap = match_topics(phi, vocab_tokens, topic_vocab)
    return float(np.mean([overlap[l, t] for l, t in pairs]))


def token_purity(
    assignments: Sequence[np.ndarray],
    token_topics: Sequence[np.ndarray],
    keep: Sequence[np.ndarray] | None = None,
    n_topics: int | None = None,
) -> float:
    """Fraction of tokens whose learned topic is greedily matched to their planted topic.

    The contingency table counts tokens by (learned topic, planted topic);
    pairs are matched greedily by largest count, one-to-one. ``keep`` masks
    the tokens that are scored, typically excluding shared-vocabulary words
    whose planted topic is not identifiable from the word itself.
    """
    learned = np.concatenate([np.asarray(a, dtype=np.int64) for a in assignments])
    planted = np.concatenate([np.asarray(t, dtype=np.int64) for t in token_topics])
    if learned.shape != planted.shape:
        raise ValueError("assignments and planted topics differ in length")
    if keep is not None:
        mask = np.concatenate([np.asarray(k, dtype=bool) for k in keep])
        learned, planted = learned[mask], planted[mask]
    if learned.size == 0:
        return 1.0
    n_l = int(learned.max()) + 1
    n_t = int(planted.max()) + 1 if n_topics is None else n_topics
    table = np.zeros((n_l, n_t), dtype=np.int64)
    np.add.at(table, (learned, planted), 1)
    matched = 0
    used_l, used_t = set(), set()
    for flat in np.argsort(-table, axis=None, kind="stable"):
        l, t = divmod(int(flat), n_t)
        if l in used_l or t in used_t:
            continue
        matched += table[l, t]
        used_l.add(l)
        used_t.add(t)
    return matched / learned.size


# --------------------------------------------------------------------------
# client scenario

VOLATILITY_WORDS = ("market", "volatility", "downturn", "turbulence", "selloff", "crash", "correction", "decline")
MISSPELLINGS = ("volatilty", "volitility", "volatiliy", "volatiltiy")
PEACE_OF_MIND_WORDS = ("concern", "panic", "sensitive", "nervous", "anxious", "fear", "uneasy", "afraid")

BACKGROUND_POOLS = {
    "review": ("review", "portfolio", "allocation", "rebalance", "account", "statement", "beneficiary", "fund", "bond", "balance", "performance", "fee"),
    "retirement": ("retirement", "retire", "income", "pension", "goal", "savings", "withdrawal", "annuity", "age", "benefit"),
    "family": ("grandchild", "daughter", "son", "vacation", "travel", "wedding", "trip", "hobby", "golf", "garden", "health", "birthday"),
    "planning": ("budget", "tax", "estate", "trust", "college", "tuition", "mortgage", "expense", "insurance", "inheritance", "gift", "charity"),
    "contact": ("call", "email", "phone", "meeting", "schedule", "voicemail", "appointment", "letter", "follow-up", "message"),
}
GENERIC_WORDS = ("discuss", "client", "talk", "update", "recommend", "agree", "explain", "confirm", "mention", "ask")

INSTRUMENTS = ("VTI", "VXUS", "BND", "VOO", "VTV", "VUG", "BNDX", "VNQ", "VIG", "VYM", "VGT", "VB")
TXN_TYPES = ("buy", "sell", "exchange", "other")


@dataclass(frozen=True)
class ScenarioSpec:
    n_clients: int = 2000
    start: dt.date = dt.date(2020, 1, 6)
    regimes: tuple[tuple[int, bool], ...] = ((8, False), (6, True), (12, False))
    """(weeks, volatile) blocks covering the feature period, in order."""
    outcome_weeks: int = 4
    base_rate: float = 0.05
    beta_signal: float = 2.0
    notes_per_client: tuple[int, int] = (2, 6)
    clients_per_advisor: int = 50
    calm_trade_rate: float = 0.12
    volatile_trade_boost: float = 0.5
    trade_anxiety_coupling: float = 0.5
    opportunism: float = 1.0
    """Weight of market engagement for clients with a < 0 (dip buyers)."""
    volatile_contact_base: float = 0.15
    volatile_contact_scale: float = 1.3
    calm_mention_rate: float = 0.15
    volatile_mention_base: float = 0.3
    mention_scale: float = 1.3
    fear_mention_ratio: float = 1.0
    misspelling_rate: float = 0.05
    vix_calm: float = 15.0
    vix_volatile: float = 45.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.base_rate < 1:
            raise ValueError("base_rate must lie in (0, 1)")
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if self.feature_weeks + self.outcome_weeks < 8:
            raise ValueError("study window must span at least 8 weeks")
        if self.notes_per_client[0] < 0 or self.notes_per_client[1] < self.notes_per_client[0]:
            raise ValueError("notes_per_client must be (min, max) with 0 <= min <= max")

    @property
    def feature_weeks(self) -> int:
        return sum(w for w, _ in self.regimes)

    @property
    def as_of(self) -> dt.date:
        """Last day of the feature period."""
        return self.start + dt.timedelta(days=7 * self.feature_weeks - 1)

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=7 * (self.feature_weeks + self.outcome_weeks) - 1)

    def volatile_weeks(self) -> list[bool]:
        flags = []
        for weeks, vol in self.regimes:
            flags.extend([vol] * weeks)
        return flags + [False] * self.outcome_weeks

    def to_json(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.isoformat()
        d["regimes"] = [list(r) for r in self.regimes]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "start" in d:
            d["start"] = dt.date.fromisoformat(d["start"])
        for key in ("regimes",):
            if key in d:
                d[key] = tuple((int(w), bool(v)) for w, v in d[key])
        if "notes_per_client" in d:
            d["notes_per_client"] = tuple(int(v) for v in d["notes_per_client"])
        return cls(**d)


@dataclass
class Scenario:
    spec: ScenarioSpec
    notes: list[RawNote]
    transactions: list  # TransactionRecord, dated <= as_of
    outcome_transactions: list  # TransactionRecord, dated after as_of
    vix: list[tuple[dt.date, float]]
    labels: dict[str, int]
    truth: dict = field(repr=False)

    @property
    def as_of(self) -> dt.date:
        return self.spec.as_of


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def calibrated_intercept(base_rate: float, beta: float) -> float:
    """Intercept c with E[sigmoid(c + beta * a)] = base_rate for a ~ N(0, 1).

    The expectation uses 80-point Gauss-Hermite quadrature; the root is found by
    bisection (the expectation is increasing in c).
    """
    x, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()

    def mean_rate(c):
        return float(np.dot(w, _sigmoid(c + beta * x)))

    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_rate(mid) < base_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _vix_series(spec: ScenarioSpec, rng: np.random.Generator) -> list[tuple[dt.date, float]]:
    flags = spec.volatile_weeks()
    out = []
    noise = 0.0
    for week, vol in enumerate(flags):
        level = spec.vix_volatile if vol else spec.vix_calm
        for dow in range(5):
            day = spec.start + dt.timedelta(days=7 * week + dow)
            noise = 0.7 * noise + rng.normal(0.0, 0.08)
            out.append((day, round(float(level * math.exp(noise)), 4)))
    return out


def _note_text(rng, pools, n_background, n_vol, n_pom, misspelling_rate) -> str:
    segments = []
    keys = sorted(pools)
    for _ in range(n_background):
        pool = pools[keys[rng.integers(len(keys))]]
        seg = [pool[rng.integers(len(pool))] for _ in range(int(rng.integers(2, 5)))]
        if rng.random() < 0.5:
            seg.insert(int(rng.integers(len(seg) + 1)), GENERIC_WORDS[rng.integers(len(GENERIC_WORDS))])
        segments.append(seg)
    for _ in range(n_vol):
        seg = []
        for _ in range(int(rng.integers(2, 5))):
            w = VOLATILITY_WORDS[rng.integers(len(VOLATILITY_WORDS))]
            if w == "volatility" and rng.random() < misspelling_rate:
                w = MISSPELLINGS[rng.integers(len(MISSPELLINGS))]
            seg.append(w)
        segments.append(seg)
    for _ in range(n_pom):
        segments.append([PEACE_OF_MIND_WORDS[rng.integers(len(PEACE_OF_MIND_WORDS))] for _ in range(int(rng.integers(2, 4)))])
    order = rng.permutation(len(segments))
    words = [w for i in order for w in segments[i]]
    return " ".join(words).capitalize() + "."


def gen_scenario(spec: ScenarioSpec) -> Scenario:
    """Simulate notes, trades, VIX and cash-out labels for ``spec.n_clients`` clients.

    Each client has a latent anxiety ``a ~ N(0, 1)`` and the label is
    Bernoulli(sigmoid(c + beta_signal * a)), with c calibrated so that the
    marginal rate equals ``base_rate``. Cash-out clients liquidate every
    position during the outcome weeks that follow ``as_of``.

    During volatile weeks clients engage with the market in proportion to
    ``e = max(a, 0) + opportunism * max(-a, 0)``: fearful clients (a > 0)
    and dip buyers (a < 0) both contact their advisor more often
    (Poisson(volatile_contact_base * exp(volatile_contact_scale * e)) extra
    notes per week), talk about market volatility at rate
    ``volatile_mention_base * exp(mention_scale * e)`` per note, and trade
    more. Only fearful clients use peace-of-mind words, at rate
    ``fear_mention_ratio * volatile_mention_base * exp(mention_scale * a)``,
    and tilt toward selling; dip buyers tilt toward buying. Calm weeks use
    ``calm_mention_rate`` for everyone.
    """
    from .features import TransactionRecord

    rng = np.random.default_rng(spec.seed)
    flags = spec.volatile_weeks()
    n_feat = spec.feature_weeks
    vix = _vix_series(spec, rng)

    n = spec.n_clients
    width = len(str(n))
    client_ids = [f"c{i:0{width}d}" for i in range(n)]
    anxiety = rng.normal(size=n)
    intercept = calibrated_intercept(spec.base_rate, spec.beta_signal)
    prob = _sigmoid(intercept + spec.beta_signal * anxiety)
    labels_arr = (rng.random(n) < prob).astype(int)
    n_adv = max(1, math.ceil(n / spec.clients_per_advisor))
    advisor_of = rng.integers(n_adv, size=n)
    verbosity = rng.integers(1, 4, size=n_adv)

    notes: list[RawNote] = []
    txns, outcome = [], []
    holdings_start = {}
    for i, cid in enumerate(client_ids):
        a_pos = max(anxiety[i], 0.0)
        a_neg = max(-anxiety[i], 0.0)
        engaged = a_pos + spec.opportunism * a_neg
        adv = int(advisor_of[i])
        # notes
        n_notes = int(rng.integers(spec.notes_per_client[0], spec.notes_per_client[1] + 1))
        days = list(rng.integers(0, 7 * n_feat, size=n_notes))
        for week in range(n_feat):
            if flags[week]:
                extra = int(rng.poisson(spec.volatile_contact_base * math.exp(spec.volatile_contact_scale * engaged)))
                days.extend(7 * week + rng.integers(0, 7, size=extra))
        days = np.sort(np.array(days, dtype=np.int64))
        for j, day in enumerate(days):
            week = int(day) // 7
            if flags[week]:
                lam_vol = spec.volatile_mention_base * math.exp(spec.mention_scale * engaged)
                lam_pom = spec.fear_mention_ratio * spec.volatile_mention_base * math.exp(spec.mention_scale * anxiety[i])
            else:
                lam_vol = spec.calm_mention_rate
                lam_pom = spec.fear_mention_ratio * spec.calm_mention_rate
            text = _note_text(
                rng,
                BACKGROUND_POOLS,
                int(verbosity[adv]) + int(rng.integers(0, 2)),
                int(rng.poisson(lam_vol)),
                int(rng.poisson(lam_pom)),
                spec.misspelling_rate,
            )
            notes.append(
                RawNote(f"{cid}-n{j:02d}", f"adv{adv:03d}", cid, spec.start + dt.timedelta(days=int(day)), text)
            )

        # portfolio and trades
        n_acct = int(rng.integers(1, 4))
        accounts = [f"{cid}-a{k}" for k in range(n_acct)]
        held = rng.choice(len(INSTRUMENTS), size=int(rng.integers(2, 6)), replace=False)
        positions = {}
        for h in sorted(held):
            positions[(accounts[int(rng.integers(n_acct))], INSTRUMENTS[h])] = float(np.round(rng.lognormal(10.0, 1.0), 2))
        holdings_start[cid] = {f"{acc}|{ins}": amt for (acc, ins), amt in sorted(positions.items())}

        for week in range(n_feat + spec.outcome_weeks):
            rate = spec.calm_trade_rate
            if flags[week]:
                rate *= 1.0 + spec.volatile_trade_boost + spec.trade_anxiety_coupling * engaged
            for _ in range(int(rng.poisson(rate))):
                day = spec.start + dt.timedelta(days=7 * week + int(rng.integers(0, 5)))
                p_sell = 0.35 + (0.25 * (min(a_pos, 1.0) - min(spec.opportunism * a_neg, 1.0)) * spec.trade_anxiety_coupling if flags[week] else 0.0)
                u = rng.random()
                if u < p_sell:
                    kind = "sell"
                elif u < p_sell + 0.12:
                    kind = "exchange"
                elif u < p_sell + 0.17:
                    kind = "other"
                else:
                    kind = "buy"
                if kind == "sell" and positions:
                    keys = sorted(positions)
                    key = keys[int(rng.integers(len(keys)))]
                    amount = float(np.round(positions[key] * rng.uniform(0.05, 0.5), 2))
                    positions[key] = round(positions[key] - amount, 2)
                    acct, inst = key
                else:
                    if kind == "sell":
                        kind = "buy"
                    acct = accounts[int(rng.integers(n_acct))]
                    inst = INSTRUMENTS[int(rng.integers(len(INSTRUMENTS)))]
                    amount = float(np.round(rng.lognormal(8.0, 1.0), 2))
                    if kind == "buy":
                        positions[(acct, inst)] = round(positions.get((acct, inst), 0.0) + amount, 2)
                rec = TransactionRecord(cid, day, inst, kind, amount, acct)
                (txns if day <= spec.as_of else outcome).append(rec)

        if labels_arr[i]:
            week = n_feat + int(rng.integers(0, spec.outcome_weeks))
            day = spec.start + dt.timedelta(days=7 * week + 4)
            for (acct, inst), amt in sorted(positions.items()):
                if amt > 0:
                    outcome.append(TransactionRecord(cid, day, inst, "sell", amt, acct))
                    positions[(acct, inst)] = 0.0

    labels = {cid: int(labels_arr[i]) for i, cid in enumerate(client_ids)}
    truth = {
        "spec": spec.to_json(),
        "as_of": spec.as_of.isoformat(),
        "intercept": intercept,
        "volatile_weeks": [(spec.start + dt.timedelta(days=7 * w)).isoformat() for w, f in enumerate(flags) if f],
        "clients": {
            cid: {
                "anxiety": float(anxiety[i]),
                "label_probability": float(prob[i]),
                "label": int(labels_arr[i]),
                "advisor_id": f"adv{int(advisor_of[i]):03d}",
                "initial_holdings": holdings_start[cid],
            }
            for i, cid in enumerate(client_ids)
        },
    }
    key = lambda r: (r.client_id, r.date, r.account_id, r.instrument, r.txn_type, r.amount)
    txns.sort(key=key)
    outcome.sort(key=key)
    return Scenario(spec, notes, txns, outcome, vix, labels, truth)


def flag_cash_out(initial_holdings: dict[str, dict[str, float]], records: Sequence) -> dict[str, int]:
    """1 for clients whose positions are all zero after replaying ``records``.

    ``initial_holdings`` maps client -> {"account|instrument": amount}. Buys
    add to a position, sells subtract; exchanges and other entries leave
    positions untouched.
    """
    positions: dict[str, dict[tuple[str, str], float]] = {}
    for cid, held in initial_holdings.items():
        positions[cid] = {tuple(k.split("|", 1)): float(v) for k, v in held.items()}
    for r in sorted(records, key=lambda r: (r.client_id, r.date)):
        book = positions.setdefault(r.client_id, {})
        key = (r.account_id, r.instrument)
        if r.txn_type == "buy":
            book[key] = book.get(key, 0.0) + r.amount
        elif r.txn_type == "sell":
            book[key] = book.get(key, 0.0) - r.amount
    return {cid: int(bool(book) and all(v <= 0.005 for v in book.values())) for cid, book in sorted(positions.items())}


def write_scenario(scenario: Scenario, outdir: str | Path) -> None:
    """Emit notes.jsonl, transactions.csv, outcome_transactions.csv, vix.csv, labels.csv, ground_truth.json."""
    from .features import write_transactions, write_vix

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_notes(scenario.notes, outdir / "notes.jsonl")
    write_transactions(scenario.transactions, outdir / "transactions.csv")
    write_transactions(scenario.outcome_transactions, outdir / "outcome_transactions.csv")
    write_vix(scenario.vix, outdir / "vix.csv")
    with open(outdir / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["client_id", "label"])
        for cid in sorted(scenario.labels):
            w.writerow([cid, scenario.labels[cid]])
    (outdir / "ground_truth.json").write_text(json.dumps(scenario.truth, indent=1, sort_keys=True) + "\n", encoding="utf-8")
