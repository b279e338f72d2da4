import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from notesforge import synth, topicmodel
from notesforge.corpus import TokenDoc, Vocabulary
from notesforge.topicmodel import LdaConfig

from conftest import docs_of

QUICK = dict(iterations=60, burn_in=20, thin=5)


def small_corpus(seed=0, n_docs=60):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(12)]
    docs = docs_of(*[list(rng.choice(words, size=rng.integers(0, 15))) for _ in range(n_docs)])
    return docs, Vocabulary.from_docs(docs)


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(k=0), dict(iterations=0), dict(burn_in=10, iterations=10), dict(beta=0.0), dict(alpha=-1.0), dict(thin=0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LdaConfig(**kw)

    def test_alpha_default(self):
        assert LdaConfig(k=20).alpha_value == 2.5
        assert LdaConfig(k=4, alpha=0.1).alpha_value == 0.1


class TestConditional:
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_normalized_and_proportional(self, k, seed):
        rng = np.random.default_rng(seed)
        V = 7
        n_dt, n_tw = rng.integers(0, 5, k), rng.integers(0, 5, k)
        n_t = n_tw + rng.integers(0, 20, k)
        p = topicmodel.conditional(n_dt, n_tw, n_t, 0.5, 0.01, V)
        raw = (n_dt + 0.5) * (n_tw + 0.01) / (n_t + V * 0.01)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p >= 0)
        np.testing.assert_allclose(p, raw / raw.sum(), rtol=1e-12)


class TestFit:
    def test_single_topic_phi_is_smoothed_unigram(self):
        docs, vocab = small_corpus()
        model = topicmodel.fit(docs, vocab, LdaConfig(k=1, **QUICK))
        counts = np.array(vocab.counts, dtype=float)
        beta = 0.01
        expected = (counts + beta) / (counts.sum() + len(vocab) * beta)
        np.testing.assert_allclose(model.phi[0], expected, rtol=0, atol=1e-9)
        assert topicmodel.dominant_topic(model, 0) == (0, 1.0)

    def test_invariants_every_sweep(self):
        docs, vocab = small_corpus()
        totals = []

        def cb(sweep, ndt, ntw):
            assert np.array_equal(ntw.sum(axis=1), ndt.sum(axis=0))
            totals.append(int(ntw.sum()))

        model = topicmodel.fit(docs, vocab, LdaConfig(k=3, **QUICK), check_invariants=True, callback=cb)
        assert len(totals) == 60 and len(set(totals)) == 1
        assert np.array_equal(model.doc_topic_counts.sum(axis=1), [len(d) for d in docs])
        np.testing.assert_allclose(model.phi.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(model.theta.sum(axis=1), 1.0, atol=1e-9)
        tally = np.zeros_like(model.topic_word_counts)
        for d, z in zip(docs, model.assignments):
            for tok, t in zip(d.tokens, z):
                tally[t, vocab.index_of(tok)] += 1
        assert np.array_equal(tally, model.topic_word_counts)

    def test_deterministic(self):
        docs, vocab = small_corpus()
        a = topicmodel.fit(docs, vocab, LdaConfig(k=3, seed=5, **QUICK))
        b = topicmodel.fit(docs, vocab, LdaConfig(k=3, seed=5, **QUICK))
        assert all(np.array_equal(x, y) for x, y in zip(a.assignments, b.assignments))
        assert np.array_equal(a.phi, b.phi)

    def test_seed_changes_result(self):
        docs, vocab = small_corpus()
        a = topicmodel.fit(docs, vocab, LdaConfig(k=3, seed=1, **QUICK))
        b = topicmodel.fit(docs, vocab, LdaConfig(k=3, seed=2, **QUICK))
        assert not np.array_equal(a.phi, b.phi)

    def test_document_order_exchangeable(self):
        docs, vocab = small_corpus()
        perm = np.random.default_rng(0).permutation(len(docs))
        a = topicmodel.fit(docs, vocab, LdaConfig(k=3, **QUICK))
        b = topicmodel.fit([docs[i] for i in perm], vocab, LdaConfig(k=3, **QUICK))
        np.testing.assert_array_equal(b.theta, a.theta[perm])
        np.testing.assert_array_equal(a.phi, b.phi)

    def test_errors(self):
        docs, vocab = small_corpus()
        with pytest.raises(ValueError):
            topicmodel.fit([], vocab)
        with pytest.raises(KeyError, match="zzz"):
            topicmodel.fit(docs + [TokenDoc("new", ["zzz"])], vocab, LdaConfig(k=2, **QUICK))
        with pytest.raises(ValueError):
            topicmodel.fit(docs + [TokenDoc(docs[0].note_id, [])], vocab, LdaConfig(k=2, **QUICK))

    def test_planted_recovery(self, topic_corpus):
        docs, vocab, truth = topic_corpus
        model = topicmodel.fit(docs, vocab, LdaConfig(k=5, iterations=300, burn_in=100))
        assert synth.topic_purity(model.phi, vocab.tokens, truth.topic_vocab, truth.shared_vocab) >= 0.8
        keep = [~s for s in truth.token_shared]
        assert synth.token_purity(model.assignments, truth.token_topics, keep, 5) >= 0.8
        for t in range(5):
            top = topicmodel.top_words(model, t, 5)
            assert any(set(top) <= set(v) | set(truth.shared_vocab) for v in truth.topic_vocab)


class TestQueries:
    def test_top_words_ties_lexicographic(self):
        docs = docs_of(["b", "a"], ["a", "b"])
        model = topicmodel.fit(docs, Vocabulary.from_docs(docs), LdaConfig(k=1, **QUICK))
        assert topicmodel.top_words(model, 0, 2) == ["a", "b"]
        assert topicmodel.top_words(model, 0, 0) == []
        assert topicmodel.top_words(model, 0, 99) == ["a", "b"]
        with pytest.raises(IndexError):
            topicmodel.top_words(model, 1)

    def test_dominant_shares_partition(self):
        docs, vocab = small_corpus()
        model = topicmodel.fit(docs, vocab, LdaConfig(k=4, **QUICK))
        dom = np.bincount([topicmodel.dominant_topic(model, d)[0] for d in range(len(docs))], minlength=4)
        assert abs((dom / len(docs)).sum() - 1.0) <= 1e-9

    def test_infer_doc(self, topic_corpus):
        docs, vocab, _ = topic_corpus
        model = topicmodel.fit(docs, vocab, LdaConfig(k=5, iterations=200, burn_in=50))
        k = model.k
        np.testing.assert_allclose(topicmodel.infer_doc(model, TokenDoc("e", [])), np.full(k, 1 / k))
        with pytest.warns(topicmodel.OutOfVocabularyWarning):
            np.testing.assert_allclose(topicmodel.infer_doc(model, TokenDoc("e", ["nope"])), np.full(k, 1 / k))
        agree = [
            np.argmax(topicmodel.infer_doc(model, d, sweeps=50)) == topicmodel.dominant_topic(model, j)[0]
            for j, d in enumerate(docs[:100])
        ]
        assert np.mean(agree) >= 0.9

    def test_infer_single_topic(self):
        docs, vocab = small_corpus()
        model = topicmodel.fit(docs, vocab, LdaConfig(k=1, **QUICK))
        assert topicmodel.infer_doc(model, docs[1]).tolist() == [1.0]


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        docs, vocab = small_corpus()
        model = topicmodel.fit(docs, vocab, LdaConfig(k=3, **QUICK))
        topicmodel.save_model(model, tmp_path)
        back = topicmodel.load_model(tmp_path)
        assert np.array_equal(back.phi, model.phi) and np.array_equal(back.theta, model.theta)
        assert np.array_equal(back.topic_word_counts, model.topic_word_counts)
        assert back.note_ids == model.note_ids and back.vocab == model.vocab and back.config == model.config

    def test_tampered_vocab_rejected(self, tmp_path):
        docs, vocab = small_corpus()
        topicmodel.save_model(topicmodel.fit(docs, vocab, LdaConfig(k=2, **QUICK)), tmp_path)
        lines = (tmp_path / "vocab.csv").read_text().splitlines()
        tok, idx, count = lines[1].split(",")
        lines[1] = f"{tok},{idx},{int(count) + 1}"
        (tmp_path / "vocab.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError):
            topicmodel.load_model(tmp_path)
