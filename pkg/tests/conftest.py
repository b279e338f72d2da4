import datetime as dt

import pytest
from hypothesis import HealthCheck, settings

from notesforge import corpus, synth

# numba compiles on first call, so per-example deadlines are meaningless
settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SAMPLE_NOTE = (
    "Allison and Bob. Discussed MV. They don't seem too worried.  I reassured them that they are only "
    "35% stocks AA, and will check on regular basis.  They are now in their new assisted living facility.  "
    "They like it."
)


def make_note(note_id, text, client="c1", advisor="a1", date=dt.date(2020, 1, 6)):
    return corpus.RawNote(note_id, advisor, client, date, text)


def docs_of(*token_lists):
    return [corpus.TokenDoc(f"d{i}", toks) for i, toks in enumerate(token_lists)]


@pytest.fixture(scope="session")
def topic_corpus():
    """Preprocessed 5-topic disjoint-vocabulary corpus (seed 0) and its truth."""
    notes, truth = synth.gen_topic_corpus(synth.TopicCorpusSpec(seed=0))
    docs, vocab, _ = corpus.preprocess(notes, corpus.PreprocessConfig(mine=False))
    return docs, vocab, truth


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
