import datetime as dt
import json
import warnings

import numpy as np
import pytest

from notesforge import embedding, tagging
from notesforge.corpus import TokenDoc, Vocabulary
from notesforge.embedding import EmbeddingConfig
from notesforge.tagging import TopicLexicon

from conftest import make_note
from test_embedding import SMALL, cluster_corpus

GRID = (0.5, 0.6, 0.7, 0.8, 0.9)


@pytest.fixture(scope="module")
def model():
    return embedding.train(cluster_corpus(), EmbeddingConfig(seed=0, **SMALL))


def brute_events(docs, notes, lexicons):
    meta = {n.note_id: n for n in notes}
    out = []
    for d in docs:
        for lex in lexicons:
            for pos, tok in enumerate(d.tokens):
                if tok in lex.expanded:
                    out.append((d.note_id, pos, lex.topic_name, meta[d.note_id].client_id, tok))
    return sorted(out)


class TestExpand:
    def test_threshold_monotone(self, model):
        sets = [set(tagging.expand_lexicon(model, ["a0", "b3"], t).expanded) for t in GRID]
        for loose, tight in zip(sets, sets[1:]):
            assert tight <= loose

    def test_extremes(self, model):
        assert set(tagging.expand_lexicon(model, ["a0", "a1"], 1.01).expanded) == {"a0", "a1"}
        assert set(tagging.expand_lexicon(model, ["a0"], -1.0).expanded) == set(model.vocab.tokens)

    def test_max_over_seeds_oracle(self, model):
        lex = tagging.expand_lexicon(model, ["a0", "b0"], 0.6)
        for w in model.vocab.tokens:
            best = max(model.similarity(w, "a0"), model.similarity(w, "b0"))
            if w in ("a0", "b0"):
                assert lex.expanded[w] == 1.0
            elif best >= 0.6 + 1e-9:
                assert lex.expanded[w] == pytest.approx(best, abs=1e-12)
            elif best < 0.6 - 1e-9:
                assert w not in lex.expanded
        assert all(s >= 0.6 for s in lex.expanded.values())

    def test_cluster_expansion_stays_in_cluster(self):
        clean = 0
        for seed in range(5):
            m = embedding.train(cluster_corpus(seed=seed), EmbeddingConfig(seed=seed, **SMALL))
            clean += all(w.startswith("a") for w in tagging.expand_lexicon(m, ["a0"], 0.7).expanded)
        assert clean >= 5 * 0.9

    def test_missing_seeds(self, model):
        with pytest.warns(UserWarning, match="zz"):
            lex = tagging.expand_lexicon(model, ["a0", "zz"], 0.7, "t")
        assert lex.missing_seeds == ("zz",)
        with pytest.raises(KeyError):
            tagging.expand_lexicon(model, ["zz", "yy"], 0.7)
        with pytest.raises(ValueError):
            tagging.expand_lexicon(model, [], 0.7)


def lexicon(name, words):
    return TopicLexicon(name, tuple(words), 0.7, {w: 0.9 for w in words})


class TestTagCorpus:
    def test_single_hit(self):
        docs = [TokenDoc("n1", ["market-volatility", "up", "down"])]
        events = tagging.tag_corpus(docs, [make_note("n1", "")], [lexicon("mv", ["market-volatility"])])
        assert len(events) == 1 and events[0].position == 0 and events[0].matched_token == "market-volatility"

    def test_token_in_two_lexicons(self):
        docs = [TokenDoc("n1", ["panic"])]
        events = tagging.tag_corpus(docs, [make_note("n1", "")], [lexicon("b", ["panic"]), lexicon("a", ["panic"])])
        assert [e.topic_name for e in events] == ["a", "b"]

    def test_missing_metadata(self):
        with pytest.raises(KeyError):
            tagging.tag_corpus([TokenDoc("n9", ["x"])], [make_note("n1", "")], [])

    def test_counts_equal_brute_force(self, model):
        rng = np.random.default_rng(0)
        vocab = model.vocab.tokens + ["oov"]
        docs = [TokenDoc(f"n{i}", list(rng.choice(vocab, size=rng.integers(0, 30)))) for i in range(80)]
        notes = [make_note(f"n{i}", "", client=f"c{i % 7}") for i in range(80)]
        lexicons = [tagging.expand_lexicon(model, ["a0"], 0.7, "A"), tagging.expand_lexicon(model, ["b1", "b2"], 0.7, "B")]
        events = tagging.tag_corpus(docs, notes, lexicons)
        assert [(e.note_id, e.position, e.topic_name, e.client_id, e.matched_token) for e in events] == brute_events(docs, notes, lexicons)
        assert events == tagging.tag_corpus(docs, {n.note_id: n for n in notes}, lexicons)
        by_name = {lex.topic_name: lex for lex in lexicons}
        for e in events:
            assert e.matched_token in by_name[e.topic_name].expanded
            assert e.similarity >= by_name[e.topic_name].threshold


class TestIO:
    def test_events_round_trip(self, tmp_path):
        events = [tagging.TagEvent("n1", 3, "mv", "c1", dt.date(2020, 2, 3), "crash", 0.8123456789)]
        tagging.write_events(events, tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text().splitlines()[0] == "note_id,client_id,date,topic,token,similarity,position"
        assert tagging.read_events(tmp_path / "e.csv") == events

    def test_events_missing_column(self, tmp_path):
        (tmp_path / "e.csv").write_text("note_id,client_id\n")
        with pytest.raises(ValueError):
            tagging.read_events(tmp_path / "e.csv")

    def test_lexicon_config(self, tmp_path):
        p = tmp_path / "lex.json"
        p.write_text(json.dumps({"topic": "market-volatility", "seeds": ["market", "volatility"], "threshold": 0.7}))
        assert tagging.load_lexicon_config(p) == [tagging.DEFAULT_LEXICONS[0]]
        p.write_text(json.dumps([{"topic": "x", "seeds": ["a"]}]))
        assert tagging.load_lexicon_config(p)[0]["threshold"] == 0.7
        p.write_text(json.dumps([{"seeds": ["a"]}]))
        with pytest.raises(ValueError):
            tagging.load_lexicon_config(p)

    def test_default_lexicons(self):
        assert [d["seeds"] for d in tagging.DEFAULT_LEXICONS] == [["market", "volatility"], ["sensitive", "concern", "panic"]]
