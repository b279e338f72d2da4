import datetime as dt
import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from notesforge import features
from notesforge.features import FeatureRow, LeakageError, SchemaError, TransactionRecord
from notesforge.tagging import TagEvent

AS_OF = dt.date(2020, 3, 31)
D0 = dt.date(2019, 9, 1)


def txn(client, day, kind="buy", amount=100.0, account="a1", inst="X"):
    return TransactionRecord(client, day, inst, kind, amount, account)


def event(client, day, topic="mv", sim=0.8, note="n1"):
    return TagEvent(note, 0, topic, client, day, "crash", sim)


def monday(day):
    return day - dt.timedelta(days=day.weekday())


def random_records(rng, n, clients=("c1", "c2", "c3")):
    out = []
    for _ in range(n):
        out.append(
            txn(
                str(rng.choice(clients)),
                AS_OF - dt.timedelta(days=int(rng.integers(0, 260))),
                str(rng.choice(features.TXN_TYPES)),
                float(rng.integers(1, 1000)),
                f"acct{rng.integers(0, 3)}",
                f"i{rng.integers(0, 5)}",
            )
        )
    return out


def brute_txn(records, vix_weekly, as_of, lookback):
    """Independent per-client computation by day-by-day iteration."""
    start = as_of - dt.timedelta(days=lookback)
    vix = dict(vix_weekly)
    weeks = sorted({monday(start + dt.timedelta(days=i)) for i in range(lookback + 1)})
    out = {}
    for c in sorted({r.client_id for r in records}):
        recs = [r for r in records if r.client_id == c and start <= r.date <= as_of]
        if not recs:
            continue
        dates = sorted(r.date for r in recs)
        gaps = [(b - a).days for a, b in zip(dates, dates[1:])]
        per_week = [sum(monday(r.date) == w for r in recs) for w in weeks]
        insts = [r.instrument for r in recs]
        accts = [r.account_id for r in recs]
        f = {
            "recency_days": min((as_of - d).days for d in dates),
            "trades_7d": sum((as_of - d).days <= 6 for d in dates),
            "trades_30d": sum((as_of - d).days <= 29 for d in dates),
            "gap_std": statistics.pstdev(gaps) if len(gaps) >= 2 else 0.0,
            "n_accounts": len(set(accts)),
            "max_account_count": max(accts.count(a) for a in set(accts)),
            "max_account_amount": max(sum(r.amount for r in recs if r.account_id == a) for a in set(accts)),
            "repeat_instrument_count": sum(insts.count(i) for i in set(insts) if insts.count(i) > 1),
            "repeat_instrument_amount": sum(r.amount for r in recs if insts.count(r.instrument) > 1),
            "trading_days": len(set(dates)),
            "weekly_mean": statistics.fmean(per_week),
            "weekly_std": statistics.pstdev(per_week),
        }
        for t in features.TXN_TYPES:
            f[f"count_{t}"] = sum(r.txn_type == t for r in recs)
            f[f"amount_{t}"] = sum(r.amount for r in recs if r.txn_type == t)
        num = sum(n * vix[w] for n, w in zip(per_week, weeks) if w in vix)
        den = sum(vix[w] for w in weeks if w in vix)
        f["vix_weighted_freq"] = num / den if den else 0.0
        out[c] = f
    return out


def daily_vix(start, days, rng=None):
    return [(start + dt.timedelta(days=i), 15.0 + (rng.random() * 20 if rng is not None else 0.0)) for i in range(days)]


class TestMarket:
    def test_weekly_mean_grouping(self):
        series = [(dt.date(2020, 1, 6), 10.0), (dt.date(2020, 1, 8), 20.0), (dt.date(2020, 1, 12), 30.0), (dt.date(2020, 1, 13), 5.0)]
        assert features.weekly_vix(series) == [(dt.date(2020, 1, 6), 20.0), (dt.date(2020, 1, 13), 5.0)]

    def test_regroup_oracle(self):
        rng = np.random.default_rng(0)
        series = daily_vix(dt.date(2019, 12, 30), 100, rng)
        weekly = dict(features.weekly_vix(series))
        iso = {}
        for day, v in series:
            iso.setdefault(day.isocalendar()[:2], []).append(v)
        assert sorted(weekly.values()) == pytest.approx(sorted(sum(v) / len(v) for v in iso.values()), abs=1e-12)
        assert all(w.weekday() == 0 for w in weekly)

    def test_empty(self):
        with pytest.raises(ValueError):
            features.weekly_vix([])

    def test_volatility(self):
        assert features.volatility([1.0, math.e, 1.0]) == pytest.approx(math.sqrt(2), abs=1e-12)
        assert features.volatility([1.0, 2.0]) == 0.0
        for bad in ([1.0], [1.0, 0.0, 2.0], [1.0, -1.0]):
            with pytest.raises(ValueError):
                features.volatility(bad)

    @given(st.lists(st.floats(0.1, 1000.0), min_size=3, max_size=30))
    def test_volatility_two_pass(self, prices):
        r = [math.log(b / a) for a, b in zip(prices, prices[1:])]
        m = sum(r) / len(r)
        expected = math.sqrt(sum((x - m) ** 2 for x in r) / (len(r) - 1))
        assert features.volatility(prices) == pytest.approx(expected, rel=1e-9, abs=1e-12)


class TestTxnFeatures:
    def test_record_validation(self):
        with pytest.raises(SchemaError):
            txn("c", AS_OF, kind="gift")
        for amt in (-1.0, float("nan"), float("inf")):
            with pytest.raises(SchemaError):
                txn("c", AS_OF, amount=amt)

    def test_brute_force(self):
        rng = np.random.default_rng(1)
        records = random_records(rng, 400)
        vix = features.weekly_vix(daily_vix(D0 - dt.timedelta(days=30), 250, rng))
        got = features.txn_features(records, vix, AS_OF, lookback=182)
        want = brute_txn(records, vix, AS_OF, 182)
        assert set(got) == set(want)
        for c in want:
            assert list(got[c]) == list(features.TXN_FEATURES)
            for k, v in want[c].items():
                assert got[c][k] == pytest.approx(v, rel=1e-12, abs=1e-12), (c, k)

    def test_single_buy_on_as_of(self):
        f = features.txn_features([txn("c", AS_OF, amount=50.0)], [], AS_OF)["c"]
        assert f["recency_days"] == 0 and f["trades_7d"] == 1 and f["count_buy"] == 1 and f["amount_buy"] == 50.0
        assert f["vix_weighted_freq"] == 0.0 and f["gap_std"] == 0.0

    def test_client_without_trades(self):
        out = features.txn_features([], [], AS_OF, lookback=90, clients=["z"])
        assert out["z"]["recency_days"] == 90.0
        assert all(v == 0 for k, v in out["z"].items() if k != "recency_days")

    def test_old_records_ignored(self):
        out = features.txn_features([txn("c", AS_OF - dt.timedelta(days=400))], [], AS_OF, lookback=182)
        assert out == {}

    def test_constant_vix_is_mean_weekly_count(self):
        rng = np.random.default_rng(2)
        records = random_records(rng, 200)
        vix = features.weekly_vix(daily_vix(D0 - dt.timedelta(days=60), 300))
        for f in features.txn_features(records, vix, AS_OF).values():
            assert f["vix_weighted_freq"] == pytest.approx(f["weekly_mean"], rel=1e-12)

    def test_leakage(self):
        with pytest.raises(LeakageError, match="after as_of"):
            features.txn_features([txn("c", AS_OF + dt.timedelta(days=1))], [], AS_OF)


class TestNoteFeatures:
    def test_names(self):
        names = features.note_feature_names(["b", "a"])
        assert names[0] == "note_count" and names[1] == "a.count" and len(names) == 13

    def test_rate_and_decay(self):
        half = 30.0
        evs = [event("c", AS_OF - dt.timedelta(days=30), sim=0.7), event("c", AS_OF - dt.timedelta(days=90), sim=0.9)]
        f = features.note_features(evs, {"c": 4}, AS_OF, ["mv", "fear"], half_life=half)["c"]
        assert f["mv.rate"] == 0.5 and f["mv.count"] == 2
        assert f["mv.recency_weighted"] == pytest.approx(0.5 + 0.125, abs=1e-15)
        assert f["mv.mean_similarity"] == pytest.approx(0.8) and f["mv.max_similarity"] == 0.9
        assert f["mv.days_since_last"] == 30 and f["fear.days_since_last"] == 182.0 and f["fear.count"] == 0

    def test_age_equal_half_life(self):
        f = features.note_features([event("c", AS_OF - dt.timedelta(days=14))], {"c": 1}, AS_OF, ["mv"], half_life=14)["c"]
        assert f["mv.recency_weighted"] == 0.5

    def test_brute_force(self):
        rng = np.random.default_rng(3)
        evs = [
            event(f"c{rng.integers(0, 5)}", AS_OF - dt.timedelta(days=int(rng.integers(0, 180))), str(rng.choice(["mv", "fear", "other"])), float(rng.random()))
            for _ in range(300)
        ]
        counts = {f"c{i}": int(rng.integers(1, 40)) for i in range(7)}
        got = features.note_features(evs, counts, AS_OF, ["mv", "fear"])
        assert set(got) == set(counts)
        for c, n in counts.items():
            assert got[c]["note_count"] == n
            for t in ("mv", "fear"):
                mine = [e for e in evs if e.client_id == c and e.topic_name == t]
                assert got[c][f"{t}.count"] == len(mine)
                assert got[c][f"{t}.rate"] == pytest.approx(len(mine) / n, abs=1e-15)
                assert got[c][f"{t}.recency_weighted"] == pytest.approx(sum(0.5 ** ((AS_OF - e.date).days / 30) for e in mine), rel=1e-12)

    def test_leakage(self):
        with pytest.raises(LeakageError):
            features.note_features([event("c", AS_OF + dt.timedelta(days=1))], {"c": 1}, AS_OF, ["mv"])


class TestDataset:
    def test_outer_join_with_defaults(self):
        note = {"a": {"note_count": 2.0, "mv.days_since_last": 3.0}}
        txn_g = {"b": {"recency_days": 5.0, "trades_7d": 1.0}}
        rows = features.build_dataset(
            note, txn_g, {"a": 1, "b": 0}, note_defaults={"mv.days_since_last": 182.0}, txn_defaults={"recency_days": 182.0}
        )
        assert [r.client_id for r in rows] == ["a", "b"]
        assert rows[0].features == {"note.note_count": 2.0, "note.mv.days_since_last": 3.0, "txn.recency_days": 182.0, "txn.trades_7d": 0.0}
        assert rows[1].features["note.mv.days_since_last"] == 182.0 and rows[1].features["note.note_count"] == 0.0
        assert all(k.startswith(("note.", "txn.")) for r in rows for k in r.features)

    def test_missing_label(self):
        with pytest.raises(KeyError):
            features.build_dataset({"a": {"x": 1.0}}, {}, {})

    def test_bad_values(self):
        with pytest.raises(ValueError):
            features.build_dataset({"a": {"x": float("nan")}}, {}, {"a": 1})
        with pytest.raises(ValueError):
            features.build_dataset({"a": {"x": 1.0}}, {}, {"a": 2})


class TestIO:
    def test_transactions_round_trip(self, tmp_path):
        recs = random_records(np.random.default_rng(4), 20)
        features.write_transactions(recs, tmp_path / "t.csv")
        assert features.read_transactions(tmp_path / "t.csv") == recs

    def test_transactions_schema(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("client_id,date,amount\n")
        with pytest.raises(SchemaError):
            features.read_transactions(p)
        p.write_text("client_id,date,account_id,instrument,txn_type,amount\nc,2020-13-01,a,X,buy,1\n")
        with pytest.raises(SchemaError, match=":2"):
            features.read_transactions(p)
        p.write_text("client_id,date,account_id,instrument,txn_type,amount\nc,2020-01-01,a,X,gift,1\n")
        with pytest.raises(SchemaError):
            features.read_transactions(p)

    def test_vix_round_trip_and_order(self, tmp_path):
        series = daily_vix(D0, 10, np.random.default_rng(5))
        features.write_vix(series, tmp_path / "v.csv")
        assert features.read_vix(tmp_path / "v.csv") == series
        (tmp_path / "b.csv").write_text("date,close\n2020-01-02,10\n2020-01-01,11\n")
        with pytest.raises(SchemaError):
            features.read_vix(tmp_path / "b.csv")

    def test_labels(self, tmp_path):
        (tmp_path / "l.csv").write_text("client_id,label\na,1\nb,0\n")
        assert features.read_labels(tmp_path / "l.csv") == {"a": 1, "b": 0}
        (tmp_path / "l.csv").write_text("client_id,label\na,yes\n")
        with pytest.raises(SchemaError):
            features.read_labels(tmp_path / "l.csv")

    def test_dataset_round_trip(self, tmp_path):
        rows = [FeatureRow("a", {"note.x": 0.1, "txn.y": 1 / 3}, 1), FeatureRow("b", {"note.x": 2.0, "txn.y": 0.0}, 0)]
        features.write_dataset(rows, tmp_path / "d.csv")
        assert features.read_dataset(tmp_path / "d.csv") == rows
        (tmp_path / "bad.csv").write_text("client_id,label,x\na,1,0\n")
        with pytest.raises(SchemaError):
            features.read_dataset(tmp_path / "bad.csv")
