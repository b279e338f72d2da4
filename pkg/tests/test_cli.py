import csv
import json

import pytest

from notesforge import cli

FAST_EMB = ["--dim", "20", "--min-count", "5", "--epochs", "1"]


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    rec = json.loads(err.strip().splitlines()[-1])
    assert set(rec) == {"error", "message", "exit_code"}
    return rec


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def stages(tmp_path_factory):
    """synth -> preprocess -> embed train -> tag, shared by the stage tests."""
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--preset", "small", "--seed", "1", "--out", str(root / "data")]) == 0
    assert cli.main(["preprocess", "--notes", str(root / "data/notes.jsonl"), "--out", str(root / "pre")]) == 0
    assert cli.main(["embed", "train", "--corpus", str(root / "pre/corpus.jsonl"), "--out", str(root / "emb")] + FAST_EMB) == 0
    assert cli.main([
        "tag", "--corpus", str(root / "pre/corpus.jsonl"), "--notes", str(root / "data/notes.jsonl"),
        "--embedding", str(root / "emb/embedding.npz"), "--out", str(root / "tag"),
    ]) == 0
    return root


class TestParsing:
    def test_no_command(self, capsys):
        code, _, err = run([], capsys)
        assert code == 1 and error_of(err)["exit_code"] == 1

    def test_unknown_flag_and_bad_value(self, capsys):
        assert run(["stats", "--nope"], capsys)[0] == 1
        assert run(["lda", "fit", "--k", "many"], capsys)[0] == 1
        assert run(["featurize", "--as-of", "2020-13-40"], capsys)[0] == 1

    def test_missing_required_path(self, capsys):
        code, _, err = run(["preprocess", "--out", "x"], capsys)
        assert code == 1 and "notes" in error_of(err)["message"]

    def test_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["embed", "train", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "--dim DIM" in text and "(default: 100)" in text and "(default: 20)" in text
        assert "(default: None)" not in text

    def test_pipeline_uses_dotted_flags(self):
        args = cli.parse_args(["pipeline", "--out", "o", "--embedding.dim", "7", "--lda.k", "4"])
        assert args.__dict__["embedding.dim"] == 7 and args.__dict__["lda.k"] == 4

    def test_config_file_and_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nembedding.dim = 33\nseed=5\nlda.k=9  # trailing\n")
        args = cli.parse_args(["pipeline", "--config", str(cfg), "--out", "o", "--lda.k", "4"])
        assert args.__dict__["embedding.dim"] == 33 and args.__dict__["lda.k"] == 4 and args.seed == 5
        args = cli.parse_args(["embed", "train", "--config", str(cfg), "--seed", "2"])
        assert args.__dict__["embedding.dim"] == 33 and args.seed == 2

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("embedding.dims=3\n")
        code, _, err = run(["stats", "--config", cfg], capsys)
        assert code == 1 and "embedding.dims" in error_of(err)["message"]

    def test_seed_environment(self, monkeypatch):
        monkeypatch.setenv("NOTESFORGE_SEED", "11")
        assert cli.parse_args(["stats"]).seed == 11
        assert cli.parse_args(["stats", "--seed", "3"]).seed == 3
        monkeypatch.delenv("NOTESFORGE_SEED")
        assert cli.parse_args(["stats"]).seed == 0


class TestExitCodes:
    def test_missing_input(self, tmp_path, capsys):
        code, _, err = run(["stats", "--notes", tmp_path / "none.jsonl", "--out", tmp_path], capsys)
        assert code == 2 and error_of(err)["error"] == "FileNotFoundError"

    def test_schema_violation(self, tmp_path, capsys):
        (tmp_path / "n.jsonl").write_text('{"note_id": "a", "text": "x"}\n')
        assert run(["stats", "--notes", tmp_path / "n.jsonl", "--out", tmp_path], capsys)[0] == 3
        (tmp_path / "n.jsonl").write_text("not json\n")
        assert run(["stats", "--notes", tmp_path / "n.jsonl", "--out", tmp_path], capsys)[0] == 3

    def test_unknown_word(self, stages, capsys):
        code, _, err = run(["embed", "similar", "--model", stages / "emb/embedding.npz", "--word", "zzzz"], capsys)
        assert code == 2 and "zzzz" in error_of(err)["message"]

    def test_leakage_fixture(self, stages, tmp_path, capsys):
        data = stages / "data"
        args = [
            "featurize", "--notes", data / "notes.jsonl", "--events", stages / "tag/events.csv",
            "--vix", data / "vix.csv", "--labels", data / "labels.csv", "--out", tmp_path, "--as-of", "2020-03-01",
        ]
        code, _, err = run(args + ["--transactions", data / "transactions.csv"], capsys)
        assert code == 3 and error_of(err)["error"] == "LeakageError"


class TestStages:
    def test_outputs(self, stages):
        assert (stages / "pre/vocab.csv").exists() and (stages / "pre/phrases.csv").exists()
        assert (stages / "emb/vectors.txt").exists()
        lex = json.loads((stages / "tag/lexicons.json").read_text())
        assert [d["topic"] for d in lex] == ["market-volatility", "peace-of-mind"]
        assert rows(stages / "tag/events.csv")

    def test_similar_table(self, stages, capsys):
        code, out, _ = run(["embed", "similar", "--model", stages / "emb/embedding.npz", "--word", "market", "--k", "10"], capsys)
        lines = out.strip().splitlines()
        assert code == 0 and lines[0].split() == ["word", "similarity"] and len(lines) == 11
        sims = [float(ln.split()[1]) for ln in lines[1:]]
        assert sims == sorted(sims, reverse=True)

    def test_stats(self, stages, tmp_path, capsys):
        code, out, _ = run(["stats", "--notes", stages / "data/notes.jsonl", "--out", tmp_path], capsys)
        assert code == 0 and json.loads(out)["notes"] > 0

    def test_lda_fit_scan_coherence(self, stages, tmp_path, capsys):
        corpus_path = stages / "pre/corpus.jsonl"
        quick = ["--iterations", "30", "--burn-in", "10", "--thin", "5"]
        (tmp_path / "themes.csv").write_text("topic,theme\n0,a\n1,a\n2,b\n")
        code, out, _ = run(["lda", "fit", "--corpus", corpus_path, "--out", tmp_path / "lda", "--k", "3", "--themes", tmp_path / "themes.csv"] + quick, capsys)
        assert code == 0 and out.count("topic ") == 3
        assert len(rows(tmp_path / "lda/topics.csv")) == 30
        shares = rows(tmp_path / "lda/theme_shares.csv")
        assert [r["theme"] for r in shares] == ["a", "b"]
        assert sum(float(r["token_share"]) for r in shares) == pytest.approx(1.0)
        code, out, _ = run(["coherence", "--corpus", corpus_path, "--lda-model", tmp_path / "lda", "--out", tmp_path / "coh"], capsys)
        assert code == 0 and -1 <= json.loads(out)["mean_cv"] <= 1
        code, out, _ = run(["lda", "scan", "--corpus", corpus_path, "--out", tmp_path / "scan", "--k", "2,3,4,5,6"] + quick, capsys)
        assert code == 0 and len(rows(tmp_path / "scan/coherence_curve.csv")) == 5
        assert json.loads(out)["best_k"] in (2, 3, 4, 5, 6)

    def test_featurize_train_evaluate_importance(self, stages, tmp_path, capsys):
        data = stages / "data"
        truth = json.loads((data / "ground_truth.json").read_text())
        code, _, _ = run([
            "featurize", "--notes", data / "notes.jsonl", "--events", stages / "tag/events.csv",
            "--transactions", data / "transactions.csv", "--vix", data / "vix.csv", "--labels", data / "labels.csv",
            "--out", tmp_path / "feat", "--as-of", truth["as_of"],
        ], capsys)
        assert code == 0
        ds = tmp_path / "feat/dataset.csv"
        assert len(rows(ds)) == 300
        code, _, _ = run(["train", "--dataset", ds, "--out", tmp_path / "m", "--model", "logistic"], capsys)
        assert code == 0 and (tmp_path / "m/model.json").exists()
        code, out, _ = run(["evaluate", "--dataset", ds, "--model-file", tmp_path / "m/model.json", "--out", tmp_path / "ev"], capsys)
        assert code == 0 and 0.5 < json.loads(out)["auc"] <= 1.0
        code, out, _ = run(["evaluate", "--dataset", ds, "--out", tmp_path / "cv", "--model", "tree", "--folds", "3"], capsys)
        assert code == 0 and len(json.loads((tmp_path / "cv/report.json").read_text())["folds"]) == 3
        code, out, _ = run(["importance", "--model-file", tmp_path / "m/model.json", "--out", tmp_path / "imp"], capsys)
        ranking = rows(tmp_path / "imp/importance.csv")
        assert code == 0 and ranking[0]["rank"] == "1" and {r["source_group"] for r in ranking} == {"note", "txn"}


class TestPipeline:
    def test_small_synthetic_run(self, tmp_path, capsys):
        code, out, _ = run([
            "pipeline", "--synth", "small", "--seed", "3", "--out", tmp_path,
            "--lda.k", "5", "--lda.iterations", "50", "--lda.burn_in", "10",
            "--embedding.dim", "20", "--embedding.min_count", "5", "--embedding.epochs", "1", "--classify.rounds", "20",
        ], capsys)
        assert code == 0
        assert set(json.loads(out)) == {"logistic", "tree", "gbt"}
        for sub in ("data/labels.csv", "preprocess/corpus.jsonl", "lda/topics.csv", "lda/coherence.csv",
                    "embedding/embedding.npz", "tagging/events.csv", "features/dataset.csv", "models/gbt/roc.csv"):
            assert (tmp_path / sub).exists(), sub
        table = rows(tmp_path / "models/table5.csv")
        assert [r["model"] for r in table] == ["logistic", "tree", "gbt"]
        cfg = (tmp_path / "run_config.txt").read_text().splitlines()
        assert "seed=3" in cfg and "lda.k=5" in cfg and any(ln.startswith("resolved.as_of=") for ln in cfg)

    def test_real_inputs_need_as_of(self, tmp_path, capsys):
        code, _, err = run(["pipeline", "--out", tmp_path, "--notes", "n", "--transactions", "t", "--vix", "v", "--labels", "l"], capsys)
        assert code == 1 and "--features.as_of" in error_of(err)["message"]
