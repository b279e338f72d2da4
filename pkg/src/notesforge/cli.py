"""Command-line interface.

Every stage option has a dotted config key (``embedding.dim``). Single-stage
commands expose it under a short flag (``--dim``); ``pipeline`` exposes the
dotted name itself (``--embedding.dim``). A ``--config`` file of
``key=value`` lines supplies defaults that flags override. The seed comes
from ``--seed``, then the config file, then ``$NOTESFORGE_SEED``, then 0.

Exit codes: 0 success, 1 usage or invalid option, 2 missing/unreadable
input, 3 schema violation (including leakage past ``as_of``), 4 other
failures. Errors are written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import classify, coherence, corpus, embedding, features, pipeline, synth, tagging, topicmodel

log = logging.getLogger("notesforge")

EXIT_USAGE, EXIT_INPUT, EXIT_SCHEMA, EXIT_OTHER = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def _date(value: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {value!r}") from None


def _int_list(value: str) -> list[int]:
    try:
        out = [int(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _str_list(value: str) -> list[str]:
    return [v.strip() for v in str(value).split(",") if v.strip()]


@dataclass(frozen=True)
class Opt:
    key: str
    flag: str
    type: Callable | None
    default: Any
    help: str
    choices: tuple | None = None


OPTIONS = {
    o.key: o
    for o in [
        # paths
        Opt("paths.notes", "--notes", str, None, "notes JSON Lines file"),
        Opt("paths.corpus", "--corpus", str, None, "preprocessed corpus JSON Lines file"),
        Opt("paths.vocab", "--vocab", str, None, "vocabulary CSV (default: rebuilt from the corpus)"),
        Opt("paths.transactions", "--transactions", str, None, "transactions CSV"),
        Opt("paths.vix", "--vix", str, None, "VIX CSV (date,close)"),
        Opt("paths.labels", "--labels", str, None, "labels CSV (client_id,label)"),
        Opt("paths.events", "--events", str, None, "tag events CSV"),
        Opt("paths.dataset", "--dataset", str, None, "dataset CSV"),
        Opt("paths.lda_model", "--lda-model", str, None, "LDA model directory"),
        Opt("paths.embedding", "--embedding", str, None, "embedding container (.npz)"),
        Opt("paths.model_file", "--model-file", str, None, "trained classifier JSON"),
        Opt("paths.out", "--out", str, None, "output path"),
        # synth
        Opt("synth.kind", "--kind", str, "scenario", "what to generate", ("scenario", "topics")),
        Opt("synth.preset", "--preset", str, "default", "scenario preset", ("default", "null", "small")),
        Opt("synth.n_clients", "--n-clients", int, None, "override the preset client count"),
        Opt("synth.beta_signal", "--beta-signal", float, None, "override the preset signal strength"),
        Opt("synth.base_rate", "--base-rate", float, None, "override the preset cash-out base rate"),
        Opt("synth.n_topics", "--n-topics", int, 5, "topics in a topic corpus"),
        Opt("synth.n_docs", "--n-docs", int, 500, "documents in a topic corpus"),
        # preprocess
        Opt("preprocess.phrase_min_count", "--phrase-min-count", int, 5, "minimum count for phrase components and pairs"),
        Opt("preprocess.phrase_threshold", "--phrase-threshold", float, 0.3, "NPMI threshold for phrases"),
        Opt("preprocess.vocab_min_count", "--vocab-min-count", int, 1, "drop tokens rarer than this"),
        Opt("preprocess.mine", "--mine-phrases", _bool, True, "mine phrases from the corpus"),
        Opt("preprocess.stopwords", "--stopwords", str, None, "stopword file (default: bundled list)"),
        Opt("preprocess.extra_phrases", "--extra-phrases", str, None, "file of extra phrases, one per line"),
        Opt("stats.bin_width", "--bin-width", int, 50, "histogram bin width in characters"),
        # topic model and coherence
        Opt("lda.k", "--k", int, 20, "number of topics"),
        Opt("lda.k_values", "--k", _int_list, "5,10,15,20,25", "comma-separated topic counts to scan"),
        Opt("lda.alpha", "--alpha", float, None, "document-topic prior (default: 50/k)"),
        Opt("lda.beta", "--beta", float, 0.01, "topic-word prior"),
        Opt("lda.iterations", "--iterations", int, 1000, "Gibbs sweeps"),
        Opt("lda.burn_in", "--burn-in", int, 200, "sweeps discarded before averaging"),
        Opt("lda.thin", "--thin", int, 10, "average every n-th sweep after burn-in"),
        Opt("lda.top_n", "--top-n", int, 10, "words listed per topic"),
        Opt("lda.themes", "--themes", str, None, "CSV topic,theme mapping for theme shares"),
        Opt("coherence.window_size", "--window", int, 110, "boolean sliding window size"),
        Opt("coherence.top_n", "--top-n", int, 10, "top words scored per topic"),
        # embedding
        Opt("embedding.dim", "--dim", int, 100, "vector dimension"),
        Opt("embedding.window", "--window", int, 2, "context window"),
        Opt("embedding.min_count", "--min-count", int, 20, "minimum token count"),
        Opt("embedding.negatives", "--negatives", int, 20, "negative samples per pair"),
        Opt("embedding.epochs", "--epochs", int, 5, "passes over the corpus"),
        Opt("embedding.lr_initial", "--lr-initial", float, 0.025, "initial learning rate"),
        Opt("embedding.lr_final", "--lr-final", float, 1e-4, "final learning rate"),
        Opt("embedding.ns_exponent", "--ns-exponent", float, 0.75, "noise distribution exponent"),
        Opt("embedding.subsample", "--subsample", float, None, "frequent-word subsampling threshold"),
        Opt("embedding.word", "--word", str, None, "query word"),
        Opt("embedding.k", "--k", int, 10, "neighbours to list"),
        # tagging and features
        Opt("tagging.lexicons", "--lexicons", str, None, "lexicon JSON (default: market-volatility and peace-of-mind)"),
        Opt("tagging.threshold", "--threshold", float, None, "override every lexicon threshold"),
        Opt("features.as_of", "--as-of", _date, None, "feature cut-off date"),
        Opt("features.lookback", "--lookback", int, 182, "transaction lookback in days"),
        Opt("features.half_life", "--half-life", float, 30.0, "tag recency half-life in days"),
        Opt("features.topics", "--topics", _str_list, "market-volatility,peace-of-mind", "tag topics to featurize"),
        # classify
        Opt("classify.model", "--model", str, "gbt", "model family", ("logistic", "tree", "gbt")),
        Opt("classify.models", "--models", _str_list, "logistic,tree,gbt", "model families to evaluate"),
        Opt("classify.l2", "--l2", float, 1e-3, "logistic L2 penalty"),
        Opt("classify.epochs", "--epochs", int, 500, "logistic gradient-descent epochs"),
        Opt("classify.lr", "--lr", float, 0.1, "logistic learning rate"),
        Opt("classify.max_depth", "--max-depth", int, None, "tree depth (default: 6 for tree, 3 for gbt)"),
        Opt("classify.min_leaf", "--min-leaf", int, 20, "minimum rows per leaf"),
        Opt("classify.rounds", "--rounds", int, 200, "boosting rounds"),
        Opt("classify.learning_rate", "--learning-rate", float, 0.1, "boosting shrinkage"),
        Opt("classify.leaf_l2", "--leaf-l2", float, 1.0, "boosting leaf ridge term"),
        Opt("classify.class_weight", "--class-weight", str, "none", "class weighting", ("none", "balanced")),
        Opt("classify.folds", "--folds", int, 5, "cross-validation folds"),
        Opt("classify.threshold", "--threshold", float, 0.5, "decision threshold for accuracy and F1"),
        Opt("classify.top_k", "--top-k", int, 10, "ranking depth for the note-feature share"),
    ]
}


def _add(p: argparse.ArgumentParser, keys: Sequence[str], dotted: bool = False, flags: dict[str, str] | None = None):
    for key in keys:
        o = OPTIONS[key]
        flag = "--" + key if dotted else (flags or {}).get(key, o.flag)
        kw = {"dest": key, "default": o.default, "help": o.help}
        if not dotted and not o.choices:
            kw["metavar"] = flag.lstrip("-").upper().replace("-", "_")
        if o.type is _bool:
            kw.update(type=_bool, metavar="BOOL")
        elif o.type is not None:
            kw["type"] = o.type
        if o.choices:
            kw["choices"] = o.choices
        p.add_argument(flag, **kw)


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: config seed, then $NOTESFORGE_SEED, then 0)")
    p.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="stderr log level")
    return p


PRE_KEYS = [k for k in OPTIONS if k.startswith("preprocess.")]
LDA_PRIOR_KEYS = ["lda.alpha", "lda.beta", "lda.iterations", "lda.burn_in", "lda.thin"]
EMB_KEYS = [k for k in OPTIONS if k.startswith("embedding.") and k not in ("embedding.word", "embedding.k")]
FEAT_KEYS = ["features.as_of", "features.lookback", "features.half_life", "features.topics"]
CLS_KEYS = [
    "classify.l2", "classify.epochs", "classify.lr", "classify.max_depth", "classify.min_leaf",
    "classify.rounds", "classify.learning_rate", "classify.leaf_l2", "classify.class_weight",
]


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    common = _common()
    parser = _Parser(prog="notesforge", description="Advisor-note analytics pipeline.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, helptext, parent=sub):
        return parent.add_parser(name, help=helptext, description=helptext, parents=[common], formatter_class=fmt)

    p = cmd("synth", "generate a synthetic scenario or topic corpus")
    _add(p, ["paths.out", "synth.kind", "synth.preset", "synth.n_clients", "synth.beta_signal", "synth.base_rate", "synth.n_topics", "synth.n_docs"])

    p = cmd("preprocess", "clean, tokenize, phrase-merge and lemmatize notes")
    _add(p, ["paths.notes", "paths.out"] + PRE_KEYS)

    p = cmd("stats", "descriptive statistics of a note collection")
    _add(p, ["paths.notes", "paths.out", "stats.bin_width"])

    lda = sub.add_parser("lda", help="topic modelling", description="topic modelling")
    lsub = lda.add_subparsers(dest="lda_command", metavar="ACTION", parser_class=_Parser)
    lsub.required = True
    p = cmd("fit", "fit one LDA model and report its topics", lsub)
    _add(p, ["paths.corpus", "paths.vocab", "paths.out", "lda.k"] + LDA_PRIOR_KEYS + ["lda.top_n", "lda.themes"])
    p = cmd("scan", "fit LDA for several k and score mean C_v coherence", lsub)
    _add(p, ["paths.corpus", "paths.vocab", "paths.out", "lda.k_values"] + LDA_PRIOR_KEYS + ["coherence.window_size", "coherence.top_n"])

    p = cmd("coherence", "C_v coherence of a fitted LDA model's topics")
    _add(p, ["paths.corpus", "paths.lda_model", "paths.out", "coherence.window_size", "coherence.top_n"])

    emb = sub.add_parser("embed", help="word embeddings", description="word embeddings")
    esub = emb.add_subparsers(dest="embed_command", metavar="ACTION", parser_class=_Parser)
    esub.required = True
    p = cmd("train", "train skip-gram negative-sampling vectors", esub)
    _add(p, ["paths.corpus", "paths.out"] + EMB_KEYS)
    p = cmd("similar", "nearest neighbours of a word", esub)
    _add(p, ["paths.embedding", "embedding.word", "embedding.k", "paths.out"], flags={"paths.embedding": "--model"})

    p = cmd("tag", "expand lexicons and tag notes")
    _add(p, ["paths.corpus", "paths.notes", "paths.embedding", "paths.out", "tagging.lexicons", "tagging.threshold"])

    p = cmd("featurize", "build the per-client dataset")
    _add(p, ["paths.notes", "paths.events", "paths.transactions", "paths.vix", "paths.labels", "paths.out"] + FEAT_KEYS)

    p = cmd("train", "train one classifier on a dataset")
    _add(p, ["paths.dataset", "paths.out", "classify.model"] + CLS_KEYS)

    p = cmd("evaluate", "cross-validate a classifier, or score a trained model on a dataset")
    _add(p, ["paths.dataset", "paths.model_file", "paths.out", "classify.model", "classify.folds", "classify.threshold"] + CLS_KEYS)

    p = cmd("importance", "rank the features of a trained classifier")
    _add(p, ["paths.model_file", "paths.out", "classify.top_k"])

    p = cmd("pipeline", "run every stage from raw or synthetic inputs through evaluation")
    p.add_argument("--synth", choices=("default", "null", "small"), default=None, help="generate inputs from this scenario preset")
    _add(p, ["paths.notes", "paths.transactions", "paths.vix", "paths.labels", "paths.out"])
    _add(
        p,
        ["synth.n_clients", "synth.beta_signal", "synth.base_rate"]
        + PRE_KEYS
        + ["stats.bin_width", "lda.k"]
        + LDA_PRIOR_KEYS
        + ["lda.top_n", "lda.themes", "coherence.window_size"]
        + EMB_KEYS
        + ["tagging.lexicons", "tagging.threshold"]
        + FEAT_KEYS
        + ["classify.models", "classify.folds", "classify.threshold", "classify.top_k"]
        + CLS_KEYS,
        dotted=True,
    )
    return parser


# --------------------------------------------------------------------------
# configuration


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key != "seed" and key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def _subparsers(parser: argparse.ArgumentParser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for p in action.choices.values():
                yield p
                yield from _subparsers(p)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    config = read_config(known.config) if known.config else {}
    if config:
        for p in _subparsers(parser):
            dests = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in config.items() if k in dests})
    args = parser.parse_args(argv)
    if args.seed is None:
        raw = config.get("seed", os.environ.get("NOTESFORGE_SEED", "0"))
        try:
            args.seed = int(raw)
        except ValueError:
            raise UsageError(f"seed must be an integer, got {raw!r}") from None
    return args


def _get(args, key):
    return getattr(args, key)


def _need(args, *keys):
    dotted = args.command == "pipeline"
    missing = [
        ("--" + k if dotted and not k.startswith("paths.") else OPTIONS[k].flag) if k in OPTIONS else k
        for k in keys
        if _get(args, k) is None
    ]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def _input(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input not found: {path}")
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# stage helpers (shared by single commands and pipeline)


def _scenario_spec(args, preset: str) -> synth.ScenarioSpec:
    base = {"default": {}, "null": {"beta_signal": 0.0}, "small": {"n_clients": 300}}[preset]
    for key in ("n_clients", "beta_signal", "base_rate"):
        v = _get(args, f"synth.{key}")
        if v is not None:
            base[key] = v
    return synth.ScenarioSpec(seed=args.seed, **base)


def _preprocess_config(args) -> corpus.PreprocessConfig:
    stop = _get(args, "preprocess.stopwords")
    extra = _get(args, "preprocess.extra_phrases")
    extra_table = None
    if extra:
        lines = [ln.strip() for ln in _input(extra).read_text(encoding="utf-8").splitlines() if ln.strip()]
        extra_table = corpus.PhraseTable.from_phrases(lines)
    return corpus.PreprocessConfig(
        stopwords=corpus.load_stopwords(_input(stop)) if stop else None,
        phrase_min_count=_get(args, "preprocess.phrase_min_count"),
        phrase_threshold=_get(args, "preprocess.phrase_threshold"),
        vocab_min_count=_get(args, "preprocess.vocab_min_count"),
        extra_phrases=extra_table,
        mine=_get(args, "preprocess.mine"),
    )


def _lda_config(args, k: int) -> topicmodel.LdaConfig:
    return topicmodel.LdaConfig(
        k=k,
        alpha=_get(args, "lda.alpha"),
        beta=_get(args, "lda.beta"),
        iterations=_get(args, "lda.iterations"),
        burn_in=_get(args, "lda.burn_in"),
        thin=_get(args, "lda.thin"),
        seed=args.seed,
    )


def _embedding_config(args) -> embedding.EmbeddingConfig:
    return embedding.EmbeddingConfig(
        **{k.split(".", 1)[1]: _get(args, k) for k in EMB_KEYS},
        seed=args.seed,
    )


def _model_spec(args, kind: str) -> classify.ModelSpec:
    cw = _get(args, "classify.class_weight")
    return classify.ModelSpec(
        kind=kind,
        l2=_get(args, "classify.l2"),
        epochs=_get(args, "classify.epochs"),
        lr=_get(args, "classify.lr"),
        max_depth=_get(args, "classify.max_depth"),
        min_leaf=_get(args, "classify.min_leaf"),
        rounds=_get(args, "classify.rounds"),
        learning_rate=_get(args, "classify.learning_rate"),
        leaf_l2=_get(args, "classify.leaf_l2"),
        class_weight=None if cw == "none" else cw,
    )


def _lexicon_defs(args) -> list[dict]:
    path = _get(args, "tagging.lexicons")
    return tagging.load_lexicon_config(_input(path)) if path else [dict(d) for d in tagging.DEFAULT_LEXICONS]


def _read_themes(path: str) -> dict[int, str]:
    with open(_input(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"topic", "theme"} <= set(reader.fieldnames or []):
            raise features.SchemaError(f"{path}: expected columns topic,theme")
        return {int(r["topic"]): r["theme"] for r in reader}


def write_lda_report(model: topicmodel.LdaModel, outdir: Path, top_n: int, themes: dict[int, str] | None = None) -> None:
    """topics.csv (topic, rank, word, probability), topic_shares.csv and, with themes, theme_shares.csv.

    A topic's token share is its fraction of all sampled assignments; its
    document share is the fraction of nonempty notes for which it is dominant.
    """
    k = model.k
    rows = []
    for t in range(k):
        for rank, w in enumerate(topicmodel.top_words(model, t, top_n), 1):
            rows.append([t, rank, w, repr(float(model.phi[t, model.vocab.index_of(w)]))])
    _write_csv(outdir / "topics.csv", ["topic", "rank", "word", "probability"], rows)
    tokens = model.topic_word_counts.sum(axis=1).astype(float)
    token_share = tokens / max(tokens.sum(), 1.0)
    nonempty = np.flatnonzero(model.doc_topic_counts.sum(axis=1) > 0)
    dominant = np.bincount(np.argmax(model.theta[nonempty], axis=1), minlength=k) if nonempty.size else np.zeros(k)
    doc_share = dominant / max(nonempty.size, 1)
    themes = themes or {}
    _write_csv(
        outdir / "topic_shares.csv",
        ["topic", "theme", "token_share", "doc_share", "top_words"],
        [[t, themes.get(t, ""), repr(float(token_share[t])), repr(float(doc_share[t])), " ".join(topicmodel.top_words(model, t, 5))] for t in range(k)],
    )
    if themes:
        agg: dict[str, list[float]] = {}
        for t in range(k):
            name = themes.get(t, f"topic-{t}")
            a = agg.setdefault(name, [0.0, 0.0])
            a[0] += token_share[t]
            a[1] += doc_share[t]
        _write_csv(outdir / "theme_shares.csv", ["theme", "token_share", "doc_share"], [[n, repr(float(v[0])), repr(float(v[1]))] for n, v in sorted(agg.items())])


def _coherence_rows(model, docs, window, top_n):
    top = [topicmodel.top_words(model, t, top_n) for t in range(model.k)]
    counts = coherence.count_windows(docs, window, {w for ws in top for w in ws})
    cfg = coherence.CoherenceConfig(window_size=window, top_n=top_n)
    scores = [coherence.c_v(ws, counts, cfg) for ws in top]
    return [[t, _num(s), " ".join(top[t])] for t, s in enumerate(scores)], float(np.mean(scores))


def _similar_rows(model, word, k):
    return [[w, _num(s)] for w, s in embedding.most_similar(model, word, k)]


def _print_table(rows, header):
    width = max([len(header[0])] + [len(r[0]) for r in rows])
    print(f"{header[0]:<{width}}  {header[1]}")
    for w, s in rows:
        print(f"{w:<{width}}  {float(s):.5f}")


def _evaluate_models(args, ds: classify.Dataset, kinds: Sequence[str], outdir: Path) -> list[list]:
    summary = []
    for kind in kinds:
        spec = _model_spec(args, kind)
        mdir = _out_dir(outdir / kind)
        log.info("cross-validating %s", kind)
        rep = classify.cross_validate(ds, spec, _get(args, "classify.folds"), args.seed, _get(args, "classify.threshold"))
        classify.write_report(rep, mdir)
        model = classify.train(ds, spec, args.seed)
        classify.save_model(model, mdir / "model.json")
        ranking = classify.feature_importance(model)
        classify.write_importance(ranking, mdir / "importance.csv")
        k = min(_get(args, "classify.top_k"), len(ranking))
        share = classify.top_k_source_share(ranking, k) if k else 0.0
        row = [kind]
        for part in (rep.mean_train, rep.mean_test):
            row += [_num(part["accuracy"]), _num(part["weighted_f1"]), _num(part["auc"])]
        summary.append(row + [_num(share)])
    _write_csv(
        outdir / "table5.csv",
        ["model", "train_accuracy", "train_weighted_f1", "train_auc", "test_accuracy", "test_weighted_f1", "test_auc", "top_k_note_share"],
        summary,
    )
    return summary


# --------------------------------------------------------------------------
# commands


def cmd_synth(args):
    _need(args, "paths.out")
    out = _out_dir(_get(args, "paths.out"))
    if _get(args, "synth.kind") == "topics":
        spec = synth.TopicCorpusSpec(n_topics=_get(args, "synth.n_topics"), n_docs=_get(args, "synth.n_docs"), seed=args.seed)
        notes, truth = synth.gen_topic_corpus(spec)
        corpus.write_notes(notes, out / "notes.jsonl")
        _write_json(out / "ground_truth.json", {
            "topic_vocab": [list(v) for v in truth.topic_vocab],
            "shared_vocab": list(truth.shared_vocab),
            "mixtures": np.asarray(truth.mixtures).tolist(),
        })
        print(json.dumps({"notes": len(notes), "out": str(out)}))
        return
    scenario = synth.gen_scenario(_scenario_spec(args, _get(args, "synth.preset")))
    synth.write_scenario(scenario, out)
    print(json.dumps({"clients": scenario.spec.n_clients, "notes": len(scenario.notes), "as_of": scenario.as_of.isoformat(), "out": str(out)}))


def cmd_preprocess(args):
    _need(args, "paths.notes", "paths.out")
    notes = corpus.read_notes(_input(_get(args, "paths.notes")))
    docs, vocab, table = corpus.preprocess(notes, _preprocess_config(args))
    out = _out_dir(_get(args, "paths.out"))
    corpus.write_corpus(docs, out / "corpus.jsonl")
    vocab.to_csv(out / "vocab.csv")
    table.to_csv(out / "phrases.csv")
    print(json.dumps({"documents": len(docs), "vocabulary": len(vocab), "phrases": len(table)}))


def cmd_stats(args):
    _need(args, "paths.notes", "paths.out")
    notes = corpus.read_notes(_input(_get(args, "paths.notes")))
    rep = corpus.corpus_stats(notes, _get(args, "stats.bin_width"))
    rep.write(_out_dir(_get(args, "paths.out")))
    print(json.dumps({"notes": len(notes), "empty_notes": len(rep.empty_notes)}))


def _load_corpus(args):
    docs = corpus.read_corpus(_input(_get(args, "paths.corpus")))
    vpath = _get(args, "paths.vocab")
    vocab = corpus.Vocabulary.from_csv(_input(vpath)) if vpath else corpus.Vocabulary.from_docs(docs)
    return docs, vocab


def cmd_lda_fit(args):
    _need(args, "paths.corpus", "paths.out")
    docs, vocab = _load_corpus(args)
    model = topicmodel.fit(docs, vocab, _lda_config(args, _get(args, "lda.k")))
    out = _out_dir(_get(args, "paths.out"))
    topicmodel.save_model(model, out)
    themes = _read_themes(_get(args, "lda.themes")) if _get(args, "lda.themes") else None
    write_lda_report(model, out, _get(args, "lda.top_n"), themes)
    for t in range(model.k):
        print(f"topic {t}: {' '.join(topicmodel.top_words(model, t, _get(args, 'lda.top_n')))}")


def cmd_lda_scan(args):
    _need(args, "paths.corpus", "paths.out")
    docs, vocab = _load_corpus(args)
    coh = coherence.CoherenceConfig(window_size=_get(args, "coherence.window_size"), top_n=_get(args, "coherence.top_n"))
    result = coherence.scan_topics(docs, vocab, _get(args, "lda.k_values"), _lda_config(args, 1), coh)
    out = Path(_get(args, "paths.out"))
    if out.suffix != ".csv":
        out = _out_dir(out) / "coherence_curve.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    coherence.write_curve(result, out)
    print(json.dumps({"curve": {k: m for k, m, _ in result.curve}, "best_k": result.best_k}))


def cmd_coherence(args):
    _need(args, "paths.corpus", "paths.lda_model", "paths.out")
    docs = corpus.read_corpus(_input(_get(args, "paths.corpus")))
    model = topicmodel.load_model(_input(_get(args, "paths.lda_model")))
    rows, mean = _coherence_rows(model, docs, _get(args, "coherence.window_size"), _get(args, "coherence.top_n"))
    out = Path(_get(args, "paths.out"))
    if out.suffix != ".csv":
        out = _out_dir(out) / "coherence.csv"
    _write_csv(out, ["topic", "cv", "words"], rows)
    print(json.dumps({"mean_cv": mean}))


def cmd_embed_train(args):
    _need(args, "paths.corpus", "paths.out")
    docs = corpus.read_corpus(_input(_get(args, "paths.corpus")))
    model = embedding.train(docs, _embedding_config(args))
    out = _out_dir(_get(args, "paths.out"))
    embedding.save(model, out / "embedding.npz")
    embedding.save_text(model, out / "vectors.txt")
    print(json.dumps({"vocabulary": len(model.vocab), "dim": model.config.dim}))


def cmd_embed_similar(args):
    _need(args, "paths.embedding", "embedding.word")
    model = embedding.load(_input(_get(args, "paths.embedding")))
    word = _get(args, "embedding.word")
    if word not in model:
        raise KeyError(f"word {word!r} not in embedding vocabulary")
    rows = _similar_rows(model, word, _get(args, "embedding.k"))
    if _get(args, "paths.out"):
        _write_csv(Path(_get(args, "paths.out")), ["word", "similarity"], rows)
    _print_table(rows, ("word", "similarity"))


def cmd_tag(args):
    _need(args, "paths.corpus", "paths.notes", "paths.embedding", "paths.out")
    docs = corpus.read_corpus(_input(_get(args, "paths.corpus")))
    notes = corpus.read_notes(_input(_get(args, "paths.notes")))
    model = embedding.load(_input(_get(args, "paths.embedding")))
    lexicons = pipeline.expand_lexicons(model, _lexicon_defs(args), _get(args, "tagging.threshold"))
    events = tagging.tag_corpus(docs, notes, lexicons)
    out = _out_dir(_get(args, "paths.out"))
    _write_lexicons(lexicons, out / "lexicons.json")
    tagging.write_events(events, out / "events.csv")
    print(json.dumps({lex.topic_name: len(lex.expanded) for lex in lexicons} | {"events": len(events)}))


def _write_lexicons(lexicons, path: Path) -> None:
    _write_json(path, [
        {"topic": lex.topic_name, "seeds": list(lex.seed_words), "threshold": lex.threshold,
         "missing_seeds": list(lex.missing_seeds), "expanded": dict(lex.expanded)}
        for lex in lexicons
    ])


def cmd_featurize(args):
    _need(args, "paths.notes", "paths.events", "paths.transactions", "paths.vix", "paths.labels", "paths.out", "features.as_of")
    notes = corpus.read_notes(_input(_get(args, "paths.notes")))
    try:
        events = tagging.read_events(_input(_get(args, "paths.events")))
    except (ValueError, KeyError) as exc:
        raise features.SchemaError(f"{_get(args, 'paths.events')}: {exc}") from None
    rows = pipeline.featurize(
        notes,
        events,
        features.read_transactions(_input(_get(args, "paths.transactions"))),
        features.read_vix(_input(_get(args, "paths.vix"))),
        features.read_labels(_input(_get(args, "paths.labels"))),
        _get(args, "features.as_of"),
        _get(args, "features.topics"),
        lookback=_get(args, "features.lookback"),
        half_life=_get(args, "features.half_life"),
    )
    out = Path(_get(args, "paths.out"))
    if out.suffix != ".csv":
        out = _out_dir(out) / "dataset.csv"
    features.write_dataset(rows, out)
    print(json.dumps({"rows": len(rows), "features": len(rows[0].features) if rows else 0}))


def _load_dataset(args) -> classify.Dataset:
    return classify.Dataset.from_rows(features.read_dataset(_input(_get(args, "paths.dataset"))))


def cmd_train(args):
    _need(args, "paths.dataset", "paths.out")
    ds = _load_dataset(args)
    model = classify.train(ds, _model_spec(args, _get(args, "classify.model")), args.seed)
    out = Path(_get(args, "paths.out"))
    if out.suffix != ".json":
        out = _out_dir(out) / "model.json"
    classify.save_model(model, out)
    print(json.dumps({"model": model.kind, "features": len(model.feature_names)}))


def cmd_evaluate(args):
    _need(args, "paths.dataset", "paths.out")
    ds = _load_dataset(args)
    out = _out_dir(_get(args, "paths.out"))
    if _get(args, "paths.model_file"):
        model = classify.load_model(_input(_get(args, "paths.model_file")))
        if model.feature_names != ds.feature_names:
            raise features.SchemaError("dataset columns do not match the model's features")
        rep = classify.metrics(classify.predict_proba(model, ds.X), ds.y, _get(args, "classify.threshold"))
        classify.write_report(rep, out)
        print(json.dumps(rep.to_dict()))
        return
    rep = classify.cross_validate(ds, _model_spec(args, _get(args, "classify.model")), _get(args, "classify.folds"), args.seed, _get(args, "classify.threshold"))
    classify.write_report(rep, out)
    print(json.dumps({"mean_train": rep.mean_train, "mean_test": rep.mean_test}))


def cmd_importance(args):
    _need(args, "paths.model_file", "paths.out")
    model = classify.load_model(_input(_get(args, "paths.model_file")))
    ranking = classify.feature_importance(model)
    out = Path(_get(args, "paths.out"))
    if out.suffix != ".csv":
        out = _out_dir(out) / "importance.csv"
    classify.write_importance(ranking, out)
    k = min(_get(args, "classify.top_k"), len(ranking))
    print(json.dumps({"top_k": k, "note_share": classify.top_k_source_share(ranking, k) if k else 0.0}))


def _resolved_config(args) -> list[str]:
    lines = [f"seed={args.seed}"]
    for key in sorted(vars(args)):
        if key in OPTIONS and not key.startswith("paths."):
            v = getattr(args, key)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, dt.date):
                v = v.isoformat()
            lines.append(f"{key}={'' if v is None else v}")
    return lines


def cmd_pipeline(args):
    _need(args, "paths.out")
    out = _out_dir(_get(args, "paths.out"))
    if args.synth:
        scenario = synth.gen_scenario(_scenario_spec(args, args.synth))
        synth.write_scenario(scenario, out / "data")
        notes, txns, vix, labels = scenario.notes, scenario.transactions, scenario.vix, scenario.labels
        as_of = _get(args, "features.as_of") or scenario.as_of
    else:
        _need(args, "paths.notes", "paths.transactions", "paths.vix", "paths.labels", "features.as_of")
        notes = corpus.read_notes(_input(_get(args, "paths.notes")))
        txns = features.read_transactions(_input(_get(args, "paths.transactions")))
        vix = features.read_vix(_input(_get(args, "paths.vix")))
        labels = features.read_labels(_input(_get(args, "paths.labels")))
        as_of = _get(args, "features.as_of")
    (out / "run_config.txt").write_text("\n".join(_resolved_config(args) + [f"resolved.as_of={as_of.isoformat()}"]) + "\n", encoding="utf-8")

    log.info("preprocessing %d notes", len(notes))
    docs, vocab, table = corpus.preprocess(notes, _preprocess_config(args))
    pdir = _out_dir(out / "preprocess")
    corpus.write_corpus(docs, pdir / "corpus.jsonl")
    vocab.to_csv(pdir / "vocab.csv")
    table.to_csv(pdir / "phrases.csv")
    corpus.corpus_stats(notes, _get(args, "stats.bin_width")).write(out / "stats")

    log.info("fitting LDA")
    lda_model = topicmodel.fit(docs, vocab, _lda_config(args, _get(args, "lda.k")))
    ldir = _out_dir(out / "lda")
    topicmodel.save_model(lda_model, ldir)
    themes = _read_themes(_get(args, "lda.themes")) if _get(args, "lda.themes") else None
    write_lda_report(lda_model, ldir, _get(args, "lda.top_n"), themes)
    rows, _ = _coherence_rows(lda_model, docs, _get(args, "coherence.window_size"), _get(args, "lda.top_n"))
    _write_csv(ldir / "coherence.csv", ["topic", "cv", "words"], rows)

    log.info("training embeddings")
    emb = embedding.train(docs, _embedding_config(args))
    edir = _out_dir(out / "embedding")
    embedding.save(emb, edir / "embedding.npz")
    embedding.save_text(emb, edir / "vectors.txt")
    defs = _lexicon_defs(args)
    for word in sorted({s for d in defs for s in d["seeds"]}):
        if word in emb:
            _write_csv(edir / f"similar_{word}.csv", ["word", "similarity"], _similar_rows(emb, word, 10))

    log.info("tagging")
    lexicons = pipeline.expand_lexicons(emb, defs, _get(args, "tagging.threshold"))
    events = tagging.tag_corpus(docs, notes, lexicons)
    tdir = _out_dir(out / "tagging")
    _write_lexicons(lexicons, tdir / "lexicons.json")
    tagging.write_events(events, tdir / "events.csv")

    log.info("featurizing")
    topics = [lex.topic_name for lex in lexicons]
    feats = pipeline.featurize(
        notes, events, txns, vix, labels, as_of, topics,
        lookback=_get(args, "features.lookback"), half_life=_get(args, "features.half_life"),
    )
    fdir = _out_dir(out / "features")
    features.write_dataset(feats, fdir / "dataset.csv")
    ds = classify.Dataset.from_rows(feats)

    summary = _evaluate_models(args, ds, _get(args, "classify.models"), _out_dir(out / "models"))
    print(json.dumps({row[0]: {"test_auc": float(row[6]), "test_weighted_f1": float(row[5])} for row in summary}))


COMMANDS = {
    ("synth",): cmd_synth,
    ("preprocess",): cmd_preprocess,
    ("stats",): cmd_stats,
    ("lda", "fit"): cmd_lda_fit,
    ("lda", "scan"): cmd_lda_scan,
    ("coherence",): cmd_coherence,
    ("embed", "train"): cmd_embed_train,
    ("embed", "similar"): cmd_embed_similar,
    ("tag",): cmd_tag,
    ("featurize",): cmd_featurize,
    ("train",): cmd_train,
    ("evaluate",): cmd_evaluate,
    ("importance",): cmd_importance,
    ("pipeline",): cmd_pipeline,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, argparse.ArgumentTypeError)):
        return EXIT_USAGE
    if isinstance(exc, (features.SchemaError, corpus.NoteSchemaError, corpus.DuplicateNoteError, json.JSONDecodeError, UnicodeDecodeError)):
        return EXIT_SCHEMA
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError, KeyError)):
        return EXIT_INPUT
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    return EXIT_OTHER


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        key = (args.command,) + tuple(
            v for v in (getattr(args, "lda_command", None), getattr(args, "embed_command", None)) if v
        )
        COMMANDS[key](args)
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error record
        code = _exit_code(exc)
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(message), "exit_code": code}), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
