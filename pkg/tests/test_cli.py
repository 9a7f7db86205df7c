from __future__ import annotations

import json
from pathlib import Path

import pytest

from textemo.cli import main
from textemo.fixtures import generate_corpus, write_corpus

from conftest import make_entry


@pytest.fixture
def fixture_corpus(tmp_path) -> Path:
    path = tmp_path / "corpus.json"
    write_corpus(generate_corpus(seed=21, n_records=25), path)
    return path


class TestValidate:
    def test_clean_file(self, sample_corpus_file, capsys):
        assert main(["validate", str(sample_corpus_file)]) == 0
        assert "ok: 1 record" in capsys.readouterr().out

    def test_malformed_id_listed(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([make_entry("Ses01F_01_F000"), {**make_entry("Ses01_F000")}]))
        assert main(["validate", str(path)]) == 1
        out = capsys.readouterr().out
        assert "violation" in out
        assert "malformed id" in out

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.json")]) == 2

    def test_strict_rejects_unknown_model(self, tmp_path):
        entry = make_entry("Ses01F_01_F000")
        entry["brandnewasr"] = "hi there"
        path = tmp_path / "unknown.json"
        path.write_text(json.dumps([entry]))
        assert main(["validate", str(path)]) == 1


class TestWer:
    def test_report_and_csv(self, sample_corpus_file, tmp_path, capsys):
        out_csv = tmp_path / "wer.csv"
        assert main(["wer", str(sample_corpus_file), "--wer-out", str(out_csv)]) == 0
        stdout = capsys.readouterr().out
        assert "whispertiny" in stdout
        lines = out_csv.read_text().strip().splitlines()
        assert lines[0].startswith("model,")
        assert len(lines) == 13  # header + 11 models + counts


class TestRefine:
    def test_longest_selector_adds_ensemble(self, tmp_path, sample_entry, capsys):
        infile = tmp_path / "in.json"
        outfile = tmp_path / "out.json"
        infile.write_text(json.dumps([sample_entry]))
        assert main(["refine", "--in", str(infile), "--out", str(outfile), "--selector", "longest"]) == 0
        refined = json.loads(outfile.read_text())
        assert refined[0]["ensemble"] == "now i suppose i have been bat's going from me"
        # untouched keys are preserved
        assert refined[0]["Ground truth"] == sample_entry["Ground truth"]

    def test_llm_selector_with_mock(self, tmp_path, fixture_corpus):
        outfile = tmp_path / "refined.json"
        code = main(
            ["refine", "--in", str(fixture_corpus), "--out", str(outfile), "--selector", "llm", "--backend", "mock"]
        )
        assert code == 0
        refined = json.loads(outfile.read_text())
        assert all("ensemble" in obj for obj in refined)
        for obj in refined:
            candidates = [
                v for k, v in obj.items() if k not in ("need_prediction", "emotion", "id", "speaker", "Ground truth", "ensemble")
            ]
            assert obj["ensemble"] in candidates


class TestRun:
    def test_mock_run_writes_artifacts(self, tmp_path, fixture_corpus, capsys):
        out_dir = tmp_path / "runs"
        code = main(
            [
                "run",
                str(fixture_corpus),
                "--name", "demo",
                "--text-source", "whispertiny",
                "--context-mode", "script",
                "--context-length", "5",
                "--out-dir", str(out_dir),
                "--backend", "mock",
            ]
        )
        assert code == 0
        predictions = json.loads((out_dir / "demo.predictions.json").read_text())
        assert predictions
        assert (out_dir / "demo.eval.json").exists()
        assert (out_dir / "demo.log.jsonl").exists()

    def test_rerun_with_cache_is_identical(self, tmp_path, fixture_corpus):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        cache = tmp_path / "cache"
        argv = [
            "run",
            str(fixture_corpus),
            "--name", "demo",
            "--text-source", "whispertiny",
            "--backend", "mock",
            "--cache-dir", str(cache),
        ]
        assert main(argv + ["--out-dir", str(out_a)]) == 0
        assert main(argv + ["--out-dir", str(out_b)]) == 0
        assert (out_a / "demo.predictions.json").read_bytes() == (out_b / "demo.predictions.json").read_bytes()
        warm_log = [json.loads(l) for l in (out_b / "demo.log.jsonl").read_text().splitlines()]
        assert warm_log[-1]["cache_hit_rate"] == 1.0


class TestMatrix:
    def test_small_config(self, tmp_path, fixture_corpus, capsys):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "experiments": [
                        {"name": "ctx5", "text_source": "whispertiny", "context_length": 5, "context_mode": "script"},
                        {"name": "ctx10", "text_source": "whispertiny", "context_length": 10, "context_mode": "script"},
                    ]
                }
            )
        )
        out_dir = tmp_path / "matrix"
        code = main(["matrix", str(fixture_corpus), "--config", str(config), "--out-dir", str(out_dir)])
        assert code == 0
        rows = json.loads((out_dir / "matrix.json").read_text())
        assert [r["name"] for r in rows] == ["ctx5", "ctx10"]

    def test_empty_config(self, tmp_path, fixture_corpus):
        config = tmp_path / "empty.json"
        config.write_text(json.dumps({"experiments": []}))
        assert main(["matrix", str(fixture_corpus), "--config", str(config)]) == 0


class TestEvaluate:
    def test_round_trip_with_run(self, tmp_path, fixture_corpus, capsys):
        out_dir = tmp_path / "runs"
        main(
            [
                "run", str(fixture_corpus),
                "--name", "demo",
                "--text-source", "whispertiny",
                "--out-dir", str(out_dir),
                "--backend", "mock",
            ]
        )
        eval_out = tmp_path / "eval.json"
        code = main(
            [
                "evaluate",
                "--predictions", str(out_dir / "demo.predictions.json"),
                "--corpus", str(fixture_corpus),
                "--eval-out", str(eval_out),
            ]
        )
        assert code == 0
        standalone = json.loads(eval_out.read_text())
        from_run = json.loads((out_dir / "demo.eval.json").read_text())
        assert standalone == from_run

    def test_no_scoreable_pairs(self, tmp_path):
        corpus = tmp_path / "corpus.json"
        corpus.write_text(json.dumps([make_entry("Ses01F_01_F000", emotion="frustration")]))
        predictions = tmp_path / "pred.json"
        predictions.write_text(json.dumps([{"id": "Ses01F_01_F000", "prediction": "sad"}]))
        assert main(["evaluate", "--predictions", str(predictions), "--corpus", str(corpus)]) == 1


class TestGenFixture:
    def test_deterministic(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        assert main(["gen-fixture", "--out", str(a), "--records", "30", "--seed", "9"]) == 0
        assert main(["gen-fixture", "--out", str(b), "--records", "30", "--seed", "9"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_validates_clean(self, tmp_path):
        path = tmp_path / "gen.json"
        main(["gen-fixture", "--out", str(path), "--records", "40", "--seed", "3"])
        assert main(["validate", str(path)]) == 0
