# %% [markdown]
# # Word vectors and topic tagging
#
# A synthetic client book supplies the notes. Anxious clients write about
# market turmoil more often during volatile weeks, and "volatility" is
# sometimes misspelled. Skip-gram vectors should place the misspellings
# next to the correct word.

# %%
from collections import Counter

from notesforge import corpus, embedding, pipeline, synth, tagging

scenario = synth.gen_scenario(synth.ScenarioSpec(n_clients=2000, seed=0))
docs, vocab, _ = corpus.preprocess(scenario.notes)
model = embedding.train(docs, embedding.EmbeddingConfig(seed=0))
print(len(model.vocab), "words with vectors")

# %%
for word, sim in embedding.most_similar(model, "volatility", 10):
    print(f"{word:<14} {sim:.4f}")

# %% [markdown]
# Expand the two seed lexicons at cosine 0.7 and tag every note.

# %%
lexicons = pipeline.expand_lexicons(model)
for lex in lexicons:
    print(lex.topic_name, sorted(lex.expanded))

events = tagging.tag_corpus(docs, scenario.notes, lexicons)
per_topic = Counter(e.topic_name for e in events)
print(dict(per_topic))

# %% [markdown]
# Tagged clients who later cash out versus those who stay invested.

# %%
tagged = Counter(e.client_id for e in events if e.topic_name == "peace-of-mind")
for label in (0, 1):
    group = [c for c, y in scenario.labels.items() if y == label]
    print(f"label {label}: mean peace-of-mind tags {sum(tagged[c] for c in group) / len(group):.2f} over {len(group)} clients")
