import json
from pathlib import Path

import pytest

from keywordloop.cli import dispatch
from keywordloop.corpus import load_corpus


def write_config(tmp_path, extra=None) -> Path:
    config = {
        "synthetic_n_positive": 40,
        "synthetic_n_unlabeled": 400,
        "synthetic_n_test": 150,
        "synthetic_n_event_tokens": 8,
        "n_classify": 15,
        "n_discover": 15,
        "max_iterations": 2,
        "learning_rate": 0.02,
        "max_epochs": 100,
    }
    config.update(extra or {})
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def read_tree(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestGenData:
    def test_writes_corpus_and_tables(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "data"
        assert dispatch(
            ["gen-data", "--config", str(config), "--seed", "3", "--out", str(out)]
        ) == 0
        corpus = load_corpus(out / "corpus.jsonl")
        assert corpus.sizes() == (40, 400, 150)
        for name in ("truths.jsonl", "lexicon.json", "workers.json", "vocabulary.tsv"):
            assert (out / name).exists()

    def test_override_wins_over_file(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "data"
        code = dispatch(
            [
                "gen-data",
                "--config", str(config),
                "--seed", "3",
                "--out", str(out),
                "--set", "synthetic_n_positive=25",
            ]
        )
        assert code == 0
        assert load_corpus(out / "corpus.jsonl").sizes()[0] == 25


class TestRunLoop:
    def test_writes_run_directory(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        assert dispatch(
            ["run-loop", "--config", str(config), "--seed", "5", "--out", str(out)]
        ) == 0
        assert (out / "manifest.json").exists()
        assert (out / "iteration_001" / "checkpoint.json").exists()
        assert (out / "history.json").exists()
        assert "loop finished" in capsys.readouterr().out

    def test_byte_identical_across_executions(self, tmp_path):
        config = write_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert dispatch(
                ["run-loop", "--config", str(config), "--seed", "9", "--out", str(out)]
            ) == 0
        assert read_tree(a) == read_tree(b)


class TestExperiment:
    def test_q4_report_written(self, tmp_path):
        config = write_config(tmp_path, {"synthetic_worker_accuracy_range": [0.7, 0.7],
                                         "synthetic_adversarial_workers": 1})
        out = tmp_path / "reports"
        assert dispatch(
            [
                "experiment",
                "--which", "q4",
                "--config", str(config),
                "--seed", "2",
                "--out", str(out),
            ]
        ) == 0
        files = list(out.glob("report_*_seed2.csv"))
        assert files
        body = files[0].read_text(encoding="utf-8")
        assert "majority_vote" in body and "joint" in body


class TestTrainEvaluate:
    def test_train_then_evaluate(self, tmp_path, capsys):
        config = write_config(tmp_path)
        data = tmp_path / "data"
        assert dispatch(
            ["gen-data", "--config", str(config), "--seed", "4", "--out", str(data)]
        ) == 0
        model_dir = tmp_path / "model"
        assert dispatch(
            ["train", "--config", str(config), "--seed", "4", "--out", str(model_dir)]
        ) == 0
        assert (model_dir / "checkpoint.json").exists()
        capsys.readouterr()
        metrics_path = tmp_path / "metrics.json"
        assert dispatch(
            [
                "evaluate",
                "--checkpoint", str(model_dir / "checkpoint.json"),
                "--corpus", str(data / "corpus.jsonl"),
                "--out", str(metrics_path),
            ]
        ) == 0
        printed = json.loads(capsys.readouterr().out)
        assert 0.0 <= printed["auc"] <= 100.0
        assert json.loads(metrics_path.read_text())["n_test"] == 150


class TestErrors:
    def test_unknown_command(self, capsys):
        assert dispatch(["frobnicate", "--seed", "1"]) != 0

    def test_unknown_flag(self):
        assert dispatch(["gen-data", "--seed", "1", "--out", "x", "--bogus"]) != 0

    def test_missing_required_flag(self):
        assert dispatch(["gen-data"]) != 0

    def test_bad_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2, 3]", encoding="utf-8")
        code = dispatch(
            ["gen-data", "--config", str(bad), "--seed", "1", "--out", str(tmp_path / "o")]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err
