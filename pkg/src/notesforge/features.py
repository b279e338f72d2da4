"""Per-client feature engineering from tag events, transactions and the VIX.

Every feature is computed from data dated on or before ``as_of``; anything
later raises :class:`LeakageError` rather than being dropped silently.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tagging import TagEvent

__all__ = [
    "TransactionRecord",
    "FeatureRow",
    "SchemaError",
    "LeakageError",
    "TXN_TYPES",
    "TXN_FEATURES",
    "NOTE_TOPIC_FEATURES",
    "weekly_vix",
    "volatility",
    "txn_features",
    "note_features",
    "note_feature_names",
    "build_dataset",
    "read_transactions",
    "write_transactions",
    "read_vix",
    "write_vix",
    "read_labels",
    "write_dataset",
    "read_dataset",
]

TXN_TYPES = ("buy", "sell", "exchange", "other")


class SchemaError(ValueError):
    """Input file violates its documented format."""


class LeakageError(SchemaError):
    """Input dated after the feature cut-off date."""


@dataclass(frozen=True)
class TransactionRecord:
    client_id: str
    date: dt.date
    instrument: str
    txn_type: str
    amount: float
    account_id: str

    def __post_init__(self):
        if self.txn_type not in TXN_TYPES:
            raise SchemaError(f"unknown txn_type {self.txn_type!r} for client {self.client_id}")
        if not self.amount >= 0 or not math.isfinite(self.amount):
            raise SchemaError(f"amount must be finite and >= 0, got {self.amount!r}")


@dataclass
class FeatureRow:
    client_id: str
    features: dict[str, float]
    label: int


# --------------------------------------------------------------------------
# market data


def _week_start(day: dt.date) -> dt.date:
    return day - dt.timedelta(days=day.isoweekday() - 1)


def weekly_vix(series: Sequence[tuple[dt.date, float]]) -> list[tuple[dt.date, float]]:
    """Arithmetic mean close per ISO week, keyed by the week's Monday."""
    if not series:
        raise ValueError("VIX series is empty")
    groups: dict[dt.date, list[float]] = defaultdict(list)
    for day, close in series:
        groups[_week_start(day)].append(float(close))
    return [(w, sum(v) / len(v)) for w, v in sorted(groups.items())]


def volatility(prices: Sequence[float]) -> float:
    """Sample standard deviation of log returns."""
    p = np.asarray(prices, dtype=np.float64)
    if p.size < 2:
        raise ValueError("need at least two prices")
    if np.any(p <= 0):
        raise ValueError("prices must be positive")
    r = np.diff(np.log(p))
    if r.size < 2:
        return 0.0
    return float(np.std(r, ddof=1))


# --------------------------------------------------------------------------
# transactions

TXN_FEATURES = (
    "recency_days",
    "trades_7d",
    "trades_30d",
    "gap_std",
    *(f"count_{t}" for t in TXN_TYPES),
    "n_accounts",
    "max_account_count",
    "repeat_instrument_count",
    "trading_days",
    *(f"amount_{t}" for t in TXN_TYPES),
    "max_account_amount",
    "repeat_instrument_amount",
    "weekly_mean",
    "weekly_std",
    "vix_weighted_freq",
)


def _check_cutoff(dates: Iterable[dt.date], as_of: dt.date, what: str) -> None:
    late = [d for d in dates if d > as_of]
    if late:
        raise LeakageError(f"{len(late)} {what} dated after as_of={as_of.isoformat()} (latest {max(late).isoformat()})")


def txn_features(
    records: Sequence[TransactionRecord],
    vix_weekly: Sequence[tuple[dt.date, float]],
    as_of: dt.date,
    lookback: int = 182,
    clients: Iterable[str] = (),
) -> dict[str, dict[str, float]]:
    """Recency / frequency / monetary and VIX-weighted activity per client.

    Records older than ``as_of - lookback`` days are ignored. Clients listed in
    ``clients`` without records get zeros and ``recency_days = lookback``.
    The VIX-weighted frequency is sum_w(trades_w * vix_w) / sum_w(vix_w) over
    the ISO weeks of the window that have a VIX value.
    """
    _check_cutoff((r.date for r in records), as_of, "transactions")
    start = as_of - dt.timedelta(days=lookback)
    by_client: dict[str, list[TransactionRecord]] = defaultdict(list)
    for r in records:
        if r.date >= start:
            by_client[r.client_id].append(r)
    for c in clients:
        by_client.setdefault(c, [])

    weeks = []
    w = _week_start(start)
    while w <= as_of:
        weeks.append(w)
        w += dt.timedelta(days=7)
    vix_map = dict(vix_weekly)
    vix_weeks = [wk for wk in weeks if wk in vix_map]
    vix_mass = sum(vix_map[wk] for wk in vix_weeks)

    out = {}
    for cid in sorted(by_client):
        recs = sorted(by_client[cid], key=lambda r: r.date)
        f = dict.fromkeys(TXN_FEATURES, 0.0)
        if not recs:
            f["recency_days"] = float(lookback)
            out[cid] = f
            continue
        ages = [(as_of - r.date).days for r in recs]
        f["recency_days"] = float(min(ages))
        f["trades_7d"] = float(sum(a < 7 for a in ages))
        f["trades_30d"] = float(sum(a < 30 for a in ages))
        gaps = [(b.date - a.date).days for a, b in zip(recs, recs[1:])]
        f["gap_std"] = float(np.std(gaps)) if len(gaps) >= 2 else 0.0
        acct_n: dict[str, int] = defaultdict(int)
        acct_amt: dict[str, float] = defaultdict(float)
        inst_n: dict[str, int] = defaultdict(int)
        inst_amt: dict[str, float] = defaultdict(float)
        week_n: dict[dt.date, int] = defaultdict(int)
        for r in recs:
            f[f"count_{r.txn_type}"] += 1
            f[f"amount_{r.txn_type}"] += r.amount
            acct_n[r.account_id] += 1
            acct_amt[r.account_id] += r.amount
            inst_n[r.instrument] += 1
            inst_amt[r.instrument] += r.amount
            week_n[_week_start(r.date)] += 1
        f["n_accounts"] = float(len(acct_n))
        f["max_account_count"] = float(max(acct_n.values()))
        f["max_account_amount"] = max(acct_amt.values())
        f["repeat_instrument_count"] = float(sum(n for n in inst_n.values() if n > 1))
        f["repeat_instrument_amount"] = sum(inst_amt[i] for i, n in inst_n.items() if n > 1)
        f["trading_days"] = float(len({r.date for r in recs}))
        counts = np.array([week_n.get(wk, 0) for wk in weeks], dtype=np.float64)
        f["weekly_mean"] = float(counts.mean())
        f["weekly_std"] = float(counts.std())
        if vix_mass > 0:
            f["vix_weighted_freq"] = sum(week_n.get(wk, 0) * vix_map[wk] for wk in vix_weeks) / vix_mass
        out[cid] = f
    return out


# --------------------------------------------------------------------------
# notes

NOTE_TOPIC_FEATURES = ("count", "rate", "recency_weighted", "mean_similarity", "max_similarity", "days_since_last")


def note_feature_names(topics: Sequence[str]) -> list[str]:
    names = ["note_count"]
    for t in sorted(topics):
        names.extend(f"{t}.{f}" for f in NOTE_TOPIC_FEATURES)
    return names


def note_features(
    events: Sequence[TagEvent],
    note_counts: Mapping[str, int],
    as_of: dt.date,
    topics: Sequence[str],
    half_life: float = 30.0,
    sentinel: float = 182.0,
) -> dict[str, dict[str, float]]:
    """Tag statistics per client and topic.

    count, rate = count / max(1, notes), recency-weighted count
    sum 2^(-age / half_life), mean and max similarity, and days since the last
    tag (``sentinel`` when the topic never occurs).
    """
    _check_cutoff((e.date for e in events), as_of, "tag events")
    names = note_feature_names(topics)
    topic_set = set(topics)
    grouped: dict[tuple[str, str], list[TagEvent]] = defaultdict(list)
    clients = set(note_counts)
    for e in events:
        clients.add(e.client_id)
        if e.topic_name in topic_set:
            grouped[(e.client_id, e.topic_name)].append(e)
    out = {}
    for cid in sorted(clients):
        n_notes = int(note_counts.get(cid, 0))
        f = dict.fromkeys(names, 0.0)
        f["note_count"] = float(n_notes)
        for t in topics:
            evs = grouped.get((cid, t), [])
            if not evs:
                f[f"{t}.days_since_last"] = float(sentinel)
                continue
            ages = np.array([(as_of - e.date).days for e in evs], dtype=np.float64)
            sims = np.array([e.similarity for e in evs])
            f[f"{t}.count"] = float(len(evs))
            f[f"{t}.rate"] = len(evs) / max(1, n_notes)
            f[f"{t}.recency_weighted"] = float(np.sum(np.exp2(-ages / half_life)))
            f[f"{t}.mean_similarity"] = float(sims.mean())
            f[f"{t}.max_similarity"] = float(sims.max())
            f[f"{t}.days_since_last"] = float(ages.min())
        out[cid] = f
    return out


# --------------------------------------------------------------------------
# dataset


def _default_row(names: Sequence[str], sentinel_keys: Mapping[str, float]) -> dict[str, float]:
    row = dict.fromkeys(names, 0.0)
    row.update({k: v for k, v in sentinel_keys.items() if k in row})
    return row


def build_dataset(
    note_group: Mapping[str, Mapping[str, float]],
    txn_group: Mapping[str, Mapping[str, float]],
    labels: Mapping[str, int],
    *,
    note_defaults: Mapping[str, float] | None = None,
    txn_defaults: Mapping[str, float] | None = None,
) -> list[FeatureRow]:
    """Outer-join the two feature groups on client_id and attach labels.

    Columns are prefixed ``note.`` / ``txn.`` and keep the groups' own order.
    A client absent from one group gets that group's defaults: zeros, except
    for the keys given in ``note_defaults`` / ``txn_defaults`` (recency
    sentinels). Every joined client must have a label.
    """
    clients = sorted(set(note_group) | set(txn_group))
    unlabeled = [c for c in clients if c not in labels]
    if unlabeled:
        raise KeyError(f"missing labels for {len(unlabeled)} clients: {unlabeled[:10]}")
    note_names = list(next(iter(note_group.values()))) if note_group else []
    txn_names = list(next(iter(txn_group.values()))) if txn_group else []
    note_empty = _default_row(note_names, note_defaults or {})
    txn_empty = _default_row(txn_names, txn_defaults or {})
    rows = []
    for c in clients:
        feats = {}
        src = note_group.get(c, note_empty)
        feats.update({f"note.{k}": float(src[k]) for k in note_names})
        src = txn_group.get(c, txn_empty)
        feats.update({f"txn.{k}": float(src[k]) for k in txn_names})
        bad = [k for k, v in feats.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"client {c}: non-finite features {bad}")
        label = int(labels[c])
        if label not in (0, 1):
            raise ValueError(f"client {c}: label must be 0 or 1")
        rows.append(FeatureRow(c, feats, label))
    return rows


# --------------------------------------------------------------------------
# file formats

_TXN_COLUMNS = ["client_id", "date", "account_id", "instrument", "txn_type", "amount"]


def _parse_date(value: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: bad date {value!r}") from None


def read_transactions(path: str | Path) -> list[TransactionRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(_TXN_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for lineno, r in enumerate(reader, 2):
            where = f"{path}:{lineno}"
            try:
                amount = float(r["amount"])
            except (TypeError, ValueError):
                raise SchemaError(f"{where}: bad amount {r['amount']!r}") from None
            try:
                out.append(TransactionRecord(r["client_id"], _parse_date(r["date"], where), r["instrument"], r["txn_type"], amount, r["account_id"]))
            except SchemaError as exc:
                raise SchemaError(f"{where}: {exc}") from None
    return out


def write_transactions(records: Iterable[TransactionRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_TXN_COLUMNS)
        for r in records:
            w.writerow([r.client_id, r.date.isoformat(), r.account_id, r.instrument, r.txn_type, repr(float(r.amount))])


def read_vix(path: str | Path) -> list[tuple[dt.date, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"date", "close"} <= set(reader.fieldnames or []):
            raise SchemaError(f"{path}: expected columns date,close")
        out = []
        for lineno, r in enumerate(reader, 2):
            where = f"{path}:{lineno}"
            day = _parse_date(r["date"], where)
            try:
                close = float(r["close"])
            except (TypeError, ValueError):
                raise SchemaError(f"{where}: bad close {r['close']!r}") from None
            if not close > 0:
                raise SchemaError(f"{where}: close must be positive")
            if out and day <= out[-1][0]:
                raise SchemaError(f"{where}: dates must be strictly increasing")
            out.append((day, close))
    return out


def write_vix(series: Iterable[tuple[dt.date, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "close"])
        for day, close in series:
            w.writerow([day.isoformat(), repr(float(close))])


def read_labels(path: str | Path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"client_id", "label"} <= set(reader.fieldnames or []):
            raise SchemaError(f"{path}: expected columns client_id,label")
        out = {}
        for lineno, r in enumerate(reader, 2):
            if r["label"] not in ("0", "1"):
                raise SchemaError(f"{path}:{lineno}: label must be 0 or 1")
            out[r["client_id"]] = int(r["label"])
    return out


def write_dataset(rows: Sequence[FeatureRow], path: str | Path) -> None:
    """CSV with header client_id,label,note.*,txn.*; reals written with repr."""
    names = list(rows[0].features) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["client_id", "label"] + names)
        for r in rows:
            w.writerow([r.client_id, r.label] + [repr(float(r.features[n])) for n in names])


def read_dataset(path: str | Path) -> list[FeatureRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["client_id", "label"]:
            raise SchemaError(f"{path}: header must start with client_id,label")
        names = header[2:]
        bad = [n for n in names if not n.startswith(("note.", "txn."))]
        if bad:
            raise SchemaError(f"{path}: feature columns without note./txn. prefix: {bad}")
        rows = []
        for lineno, rec in enumerate(reader, 2):
            if len(rec) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                feats = {n: float(v) for n, v in zip(names, rec[2:])}
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: non-numeric feature") from None
            if rec[1] not in ("0", "1"):
                raise SchemaError(f"{path}:{lineno}: label must be 0 or 1")
            rows.append(FeatureRow(rec[0], feats, int(rec[1])))
    return rows
