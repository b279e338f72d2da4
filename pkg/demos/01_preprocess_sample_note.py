# %% [markdown]
# # From a raw advisor note to tokens
#
# One short note goes through every preprocessing step. Phrase mining needs
# repeated evidence, so the note is mixed into a small corpus in which
# "regular basis" and "assisted living facility" recur.

# %%
import datetime as dt

from notesforge import corpus, synth

NOTE = (
    "Allison and Bob. Discussed MV. They don't seem too worried.  I reassured them that they are only "
    "35% stocks AA, and will check on regular basis.  They are now in their new assisted living facility.  "
    "They like it."
)

cleaned = corpus.clean(NOTE)
tokens = corpus.tokenize(cleaned)
print("tokens    ", tokens)
print("no stops  ", corpus.remove_stopwords(tokens))

# %% [markdown]
# Mine phrases on a corpus where the collocations repeat, then run the full pipeline.

# %%
background, _ = synth.gen_topic_corpus(synth.TopicCorpusSpec(n_docs=60, seed=1))
repeats = [
    "We meet on a regular basis to review the plan.",
    "Mother moved to an assisted living facility last spring.",
    "Calls happen on a regular basis with the daughter.",
    "The assisted living facility bills quarterly.",
    "Reviewed costs at the assisted living facility, will check on regular basis.",
]
day = dt.date(2020, 1, 6)
notes = background + [corpus.RawNote(f"r{i}", "a1", "c1", day, t) for i, t in enumerate(repeats * 2)]
notes.append(corpus.RawNote("sample", "a1", "c1", day, NOTE))

docs, vocab, phrases = corpus.preprocess(notes)
print("phrases   ", {"-".join(p): round(s, 3) for p, s in sorted(phrases.entries.items())})
print("final     ", list(next(d for d in docs if d.note_id == "sample").tokens))

# %%
for word in ("discussed", "worried", "reassured", "assisted", "holdings", "stocks"):
    print(f"{word:>10} -> {corpus.lemmatize(word)}")
