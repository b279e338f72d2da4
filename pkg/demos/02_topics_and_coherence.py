# %% [markdown]
# # Topics on a corpus with known answers
#
# The generator plants five topics with disjoint vocabularies plus a shared
# pool of filler words. LDA should find the five, and the C_v coherence
# curve should peak at k = 5.

# %%
import numpy as np

from notesforge import coherence, corpus, synth, topicmodel
from notesforge.topicmodel import LdaConfig

notes, truth = synth.gen_topic_corpus(synth.TopicCorpusSpec(seed=0))
docs, vocab, _ = corpus.preprocess(notes, corpus.PreprocessConfig(mine=False))
print(len(docs), "documents,", len(vocab), "word types,", sum(len(d) for d in docs), "tokens")

# %%
model = topicmodel.fit(docs, vocab, LdaConfig(k=5, iterations=500, burn_in=100))
for t in range(model.k):
    print(t, topicmodel.top_words(model, t, 8))
print("token purity (shared words excluded):", round(truth.topical_purity(model.assignments), 3))

# %% [markdown]
# Share of notes whose dominant topic is each learned topic.

# %%
dominant = np.bincount([topicmodel.dominant_topic(model, d)[0] for d in range(len(docs))], minlength=model.k)
print(np.round(dominant / dominant.sum(), 3))

# %%
scan = coherence.scan_topics(docs, vocab, [2, 3, 5, 8, 12], LdaConfig(iterations=300, burn_in=100))
for k, mean_cv, _ in scan.curve:
    print(f"k={k:2d}  mean C_v={mean_cv:.4f}")
print("selected k:", scan.best_k)
