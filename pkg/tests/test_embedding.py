import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from notesforge import embedding
from notesforge.corpus import Vocabulary
from notesforge.embedding import EmbeddingConfig

from conftest import docs_of

CLUSTERS = ([f"a{i}" for i in range(10)], [f"b{i}" for i in range(10)])
SMALL = dict(dim=20, min_count=5, negatives=5, epochs=5)


def cluster_corpus(seed=0, n_docs=300, length=20):
    rng = np.random.default_rng(seed)
    return docs_of(*[list(rng.choice(CLUSTERS[d % 2], size=length)) for d in range(n_docs)])


@pytest.fixture(scope="module")
def cluster_model():
    return embedding.train(cluster_corpus(), EmbeddingConfig(seed=0, **SMALL))


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


class TestObjective:
    @given(st.integers(0, 2**31 - 1), st.integers(1, 4))
    def test_gradient_matches_finite_differences(self, seed, n_neg):
        rng = np.random.default_rng(seed)
        v, u_o, u_neg = rng.normal(size=3), rng.normal(size=3), rng.normal(size=(n_neg, 3))
        dv, du_o, du_neg = embedding.sgns_pair_grads(v, u_o, u_neg)
        f = lambda: embedding.sgns_pair_loss(v, u_o, u_neg)
        assert rel_err(dv, fd_grad(f, v)) <= 1e-4
        assert rel_err(du_o, fd_grad(f, u_o)) <= 1e-4
        assert rel_err(du_neg, fd_grad(f, u_neg)) <= 1e-4

    def test_batch_loss_matches_pair_loss(self, cluster_model):
        rng = np.random.default_rng(1)
        V = len(cluster_model.vocab)
        pairs = rng.integers(0, V, size=(20, 2))
        negs = rng.integers(0, V, size=(20, 3))
        W_in, W_out = cluster_model.input_vectors, cluster_model.output_vectors
        direct = np.mean([embedding.sgns_pair_loss(W_in[c], W_out[o], W_out[n]) for (c, o), n in zip(pairs, negs)])
        assert embedding.sgns_loss(cluster_model, pairs, negs) == pytest.approx(direct, rel=1e-12)


class TestNoise:
    def test_empirical_matches_unigram_power(self):
        counts = [500, 200, 90, 40, 10, 5, 1]
        noise = embedding.NoiseDistribution(counts, 0.75)
        w = np.array(counts, float) ** 0.75
        np.testing.assert_allclose(noise.probs, w / w.sum(), rtol=1e-12)
        draws = noise.draw(1_000_000, seed=3)
        freq = np.bincount(draws, minlength=len(counts)) / draws.size
        assert np.abs(freq - noise.probs).sum() <= 0.01


class TestTrain:
    def test_config_validation(self):
        for kw in (dict(dim=0), dict(window=0), dict(negatives=0), dict(lr_final=0.1, lr_initial=0.01), dict(min_count=0)):
            with pytest.raises(ValueError):
                EmbeddingConfig(**kw)

    def test_empty_vocab(self):
        with pytest.raises(ValueError):
            embedding.train(docs_of(["a"]), EmbeddingConfig(min_count=2))

    def test_cluster_separation(self, cluster_model):
        m = cluster_model
        unit = m.input_vectors / np.linalg.norm(m.input_vectors, axis=1, keepdims=True)
        sims = unit @ unit.T
        group = np.array([t.startswith("a") for t in m.vocab.tokens])
        same = group[:, None] == group[None, :]
        off = ~np.eye(len(group), dtype=bool)
        gap = sims[same & off].mean() - sims[~same].mean()
        assert gap >= 0.2
        hits = [embedding.most_similar(m, w, 1)[0][0][0] == w[0] for w in m.vocab.tokens]
        assert np.mean(hits) >= 0.9

    def test_vocab_respects_min_count(self):
        docs = docs_of(["x"] * 5 + ["y"] * 4 + ["z"] * 5)
        m = embedding.train(docs, EmbeddingConfig(dim=4, min_count=5, epochs=1))
        assert sorted(m.vocab.tokens) == ["x", "z"]
        assert all(c >= 5 for c in m.vocab.counts)

    def test_deterministic_and_finite(self):
        docs = cluster_corpus(n_docs=60)
        a = embedding.train(docs, EmbeddingConfig(seed=4, **SMALL))
        b = embedding.train(docs, EmbeddingConfig(seed=4, **SMALL))
        assert np.array_equal(a.input_vectors, b.input_vectors)
        assert np.isfinite(a.input_vectors).all()
        assert np.all(np.linalg.norm(a.input_vectors, axis=1) > 0)

    def test_init_range(self):
        seen = {}
        embedding.train(cluster_corpus(n_docs=20), EmbeddingConfig(dim=8, min_count=1, epochs=1, lr_initial=1e-12, lr_final=1e-13),
                        callback=lambda e, m: seen.update(W=m.input_vectors.copy(), U=m.output_vectors.copy()))
        assert np.all(np.abs(seen["W"]) <= 0.5 / 8)
        assert np.abs(seen["U"]).max() < 1e-9

    def test_heldout_loss_decreases(self):
        train_docs, held = cluster_corpus(seed=1), cluster_corpus(seed=2, n_docs=40)
        losses = []

        def cb(epoch, model):
            pairs = embedding.sample_pairs(held, model.vocab, 2, 2000, seed=0)
            negs = embedding.NoiseDistribution(model.vocab.counts).draw(pairs.shape[0] * 5, seed=9).reshape(-1, 5)
            losses.append(embedding.sgns_loss(model, pairs, negs))

        embedding.train(train_docs, EmbeddingConfig(seed=0, **SMALL), callback=cb)
        assert losses[-1] < losses[0]

    def test_subsampling_flag(self):
        docs = cluster_corpus(n_docs=60)
        a = embedding.train(docs, EmbeddingConfig(seed=0, subsample=1e-3, **SMALL))
        b = embedding.train(docs, EmbeddingConfig(seed=0, **SMALL))
        assert not np.array_equal(a.input_vectors, b.input_vectors)


class TestQueries:
    def test_cosine_basics(self):
        v = np.array([1.0, 2.0, -0.5])
        assert embedding.cosine(v, v) == pytest.approx(1.0)
        assert embedding.cosine(v, -v) == pytest.approx(-1.0)
        assert embedding.cosine(np.eye(3)[0], np.eye(3)[1]) == 0.0
        with pytest.raises(ValueError):
            embedding.cosine(v, np.zeros(3))

    def test_most_similar_contract(self, cluster_model):
        m = cluster_model
        assert embedding.most_similar(m, "a0", 0) == []
        full = embedding.most_similar(m, "a0", len(m.vocab) - 1)
        assert sorted(w for w, _ in full) == sorted(t for t in m.vocab.tokens if t != "a0")
        sims = [s for _, s in full]
        assert sims == sorted(sims, reverse=True)
        with pytest.raises(KeyError, match="nope"):
            embedding.most_similar(m, "nope")

    def test_ties_lexicographic(self):
        vocab = Vocabulary({"q": 3, "b": 2, "a": 1})
        W = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        m = embedding.EmbeddingModel(vocab, W, W.copy(), EmbeddingConfig(dim=2))
        assert [w for w, _ in embedding.most_similar(m, "q", 2)] == ["a", "b"]


class TestPersistence:
    def test_npz_round_trip(self, cluster_model, tmp_path):
        embedding.save(cluster_model, tmp_path / "m.npz")
        back = embedding.load(tmp_path / "m.npz", expected_dim=20)
        assert np.array_equal(back.input_vectors, cluster_model.input_vectors)
        assert np.array_equal(back.output_vectors, cluster_model.output_vectors)
        assert back.vocab == cluster_model.vocab and back.config == cluster_model.config
        embedding.save(back, tmp_path / "m2.npz")
        assert (tmp_path / "m.npz").read_bytes() == (tmp_path / "m2.npz").read_bytes()

    def test_truncated_and_dim_mismatch(self, cluster_model, tmp_path):
        embedding.save(cluster_model, tmp_path / "m.npz")
        data = (tmp_path / "m.npz").read_bytes()
        (tmp_path / "t.npz").write_bytes(data[: len(data) // 2])
        with pytest.raises(ValueError):
            embedding.load(tmp_path / "t.npz")
        with pytest.raises(ValueError):
            embedding.load(tmp_path / "m.npz", expected_dim=50)

    def test_text_format(self, cluster_model, tmp_path):
        embedding.save_text(cluster_model, tmp_path / "v.txt")
        assert (tmp_path / "v.txt").read_text().splitlines()[0] == f"{len(cluster_model.vocab)} 20"
        tokens, vecs = embedding.load_text(tmp_path / "v.txt")
        assert tokens == cluster_model.vocab.tokens
        assert np.array_equal(vecs, cluster_model.input_vectors)
        lines = (tmp_path / "v.txt").read_text().splitlines()
        (tmp_path / "bad.txt").write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValueError):
            embedding.load_text(tmp_path / "bad.txt")
