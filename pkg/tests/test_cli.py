import json

import pytest

from clinibench.cli import main
from clinibench.manifest import read_manifest


@pytest.fixture
def corpus_dir(tmp_path):
    out = tmp_path / "corpus"
    assert main(["synth", "--notes", "80", "--codes", "15", "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture
def split_dir(tmp_path, corpus_dir):
    out = tmp_path / "split"
    assert (
        main(
            [
                "split",
                "--notes", str(corpus_dir / "notes.jsonl"),
                "--codes", str(corpus_dir / "codes.csv"),
                "--seed", "7",
                "--out", str(out),
            ]
        )
        == 0
    )
    return out


def _common(corpus_dir, split_dir):
    return [
        "--notes", str(corpus_dir / "notes.jsonl"),
        "--codes", str(corpus_dir / "codes.csv"),
        "--split", str(split_dir / "split.json"),
    ]


class TestSynth:
    def test_deterministic_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["synth", "--notes", "40", "--codes", "10", "--seed", "3", "--out", str(out)]) == 0
        assert (out1 / "notes.jsonl").read_bytes() == (out2 / "notes.jsonl").read_bytes()
        assert (out1 / "codes.csv").read_bytes() == (out2 / "codes.csv").read_bytes()
        m1, m2 = read_manifest(out1), read_manifest(out2)
        assert m1["outputs"] == m2["outputs"]
        assert m1["config_hash"] == m2["config_hash"]

    def test_different_seed_differs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["synth", "--notes", "40", "--codes", "10", "--seed", "3", "--out", str(out1)])
        main(["synth", "--notes", "40", "--codes", "10", "--seed", "4", "--out", str(out2)])
        assert (out1 / "notes.jsonl").read_bytes() != (out2 / "notes.jsonl").read_bytes()


class TestSplitCli:
    def test_sizes_on_10_notes(self, tmp_path):
        corpus = tmp_path / "c"
        main(["synth", "--notes", "10", "--codes", "5", "--seed", "1", "--out", str(corpus)])
        out = tmp_path / "s"
        assert (
            main(
                [
                    "split",
                    "--notes", str(corpus / "notes.jsonl"),
                    "--codes", str(corpus / "codes.csv"),
                    "--ratios", "0.7,0.1,0.2",
                    "--seed", "1",
                    "--out", str(out),
                ]
            )
            == 0
        )
        split = json.loads((out / "split.json").read_text())
        assert (len(split["train"]), len(split["val"]), len(split["test"])) == (7, 1, 2)

    def test_idempotent_rerun(self, tmp_path, corpus_dir):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        args = [
            "split",
            "--notes", str(corpus_dir / "notes.jsonl"),
            "--codes", str(corpus_dir / "codes.csv"),
            "--seed", "5",
        ]
        main(args + ["--out", str(out1)])
        main(args + ["--out", str(out2)])
        assert (out1 / "split.json").read_bytes() == (out2 / "split.json").read_bytes()
        assert read_manifest(out1)["outputs"] == read_manifest(out2)["outputs"]


class TestPipeline:
    def test_offline_stages(self, tmp_path, corpus_dir, split_dir):
        common = _common(corpus_dir, split_dir)
        stats_dir = tmp_path / "stats"
        assert main(["stats", *common, "--out", str(stats_dir)]) == 0
        stats = json.loads((stats_dir / "stats.json").read_text())
        assert stats["n_notes"] == 80

        idx_dir = tmp_path / "idx"
        assert main(["index", "--kind", "bm25", *common, "--out", str(idx_dir)]) == 0

        ret_dir = tmp_path / "ret"
        assert (
            main(
                [
                    "retrieve",
                    "--method", "bm25",
                    "--index", str(idx_dir / "index.json"),
                    *common,
                    "--k", "5",
                    "--out", str(ret_dir),
                ]
            )
            == 0
        )
        lines = (ret_dir / "retrieval.jsonl").read_text().strip().splitlines()
        split = json.loads((split_dir / "split.json").read_text())
        assert len(lines) == len(split["test"])
        first = json.loads(lines[0])
        assert len(first["ranked"]) == 5
        train_ids = set(split["train"])
        assert all(doc in train_ids for doc, _ in first["ranked"])

        vote_dir = tmp_path / "vote"
        assert (
            main(
                [
                    "vote",
                    "--retrieval", str(ret_dir / "retrieval.jsonl"),
                    *common,
                    "--out", str(vote_dir),
                ]
            )
            == 0
        )

        score_dir = tmp_path / "score"
        assert (
            main(
                [
                    "score",
                    "--predictions", str(vote_dir / "predictions.jsonl"),
                    *common,
                    "--length-buckets", "60,90",
                    "--out", str(score_dir),
                ]
            )
            == 0
        )
        report = json.loads((score_dir / "report.json").read_text())
        for key in ("macro_recall", "macro_precision", "macro_f1", "map", "md_acc", "micro_f1"):
            assert 0.0 <= report[key] <= 1.0
        assert (score_dir / "report.csv").exists()

        report_dir = tmp_path / "figs"
        assert (
            main(
                [
                    "report",
                    "--reports", ",".join([str(score_dir / "report.json")] * 2),
                    "--labels", "bm25-vote,bm25-vote-b",
                    "--mean",
                    "--report-dir", str(report_dir),
                ]
            )
            == 0
        )
        assert (report_dir / "summary.csv").exists()
        assert (report_dir / "tertiles.png").exists()
        assert (report_dir / "length_buckets.png").exists()
        import csv as _csv

        with open(report_dir / "summary.csv", newline="") as fh:
            rows = list(_csv.DictReader(fh))
        assert len(rows) == 3
        assert rows[-1]["setting"] == "unweighted-mean"
        assert float(rows[-1]["macro_f1"]) == pytest.approx(report["macro_f1"], abs=1e-9)

    def test_gold_and_random_methods(self, tmp_path, corpus_dir, split_dir):
        common = _common(corpus_dir, split_dir)
        for method in ("gold", "random"):
            out = tmp_path / method
            assert (
                main(
                    [
                        "retrieve", "--method", method, *common,
                        "--k", "5", "--seed", "2", "--out", str(out),
                    ]
                )
                == 0
            )

    def test_prompt_zero_and_few_shot(self, tmp_path, corpus_dir, split_dir):
        common = _common(corpus_dir, split_dir)
        idx_dir, ret_dir = tmp_path / "i", tmp_path / "r"
        main(["index", "--kind", "bm25", *common, "--out", str(idx_dir)])
        main(
            [
                "retrieve", "--method", "bm25", "--index", str(idx_dir / "index.json"),
                *common, "--k", "5", "--out", str(ret_dir),
            ]
        )
        zs_dir = tmp_path / "zs"
        assert main(["prompt", "--mode", "zero_shot", *common, "--out", str(zs_dir)]) == 0
        fs_dir = tmp_path / "fs"
        assert (
            main(
                [
                    "prompt", "--mode", "few_shot", "--retrieval", str(ret_dir / "retrieval.jsonl"),
                    "--shots", "3", *common, "--out", str(fs_dir),
                ]
            )
            == 0
        )
        zs = (zs_dir / "prompts.jsonl").read_text().splitlines()
        fs = (fs_dir / "prompts.jsonl").read_text().splitlines()
        assert len(zs) == len(fs)
        assert len(fs[0]) > len(zs[0])

    def test_replay_and_map_and_score(self, tmp_path, corpus_dir, split_dir):
        common = _common(corpus_dir, split_dir)
        split = json.loads((split_dir / "split.json").read_text())
        # craft raw outputs holding each test note's gold descriptions
        codes_by_full = {}
        import csv as _csv

        with open(corpus_dir / "codes.csv", newline="") as fh:
            for row in _csv.DictReader(fh):
                codes_by_full[row["full_code"]] = row["short_desc"]
        notes = {}
        with open(corpus_dir / "notes.jsonl") as fh:
            for line in fh:
                obj = json.loads(line)
                notes[obj["note_id"]] = obj
        raw_path = tmp_path / "raw.jsonl"
        with open(raw_path, "w") as fh:
            for note_id in split["test"]:
                descs = [codes_by_full[c] for c in notes[note_id]["labels"]]
                descs = list(dict.fromkeys(descs))
                while len(descs) < 20:
                    descs.append(f"no further findings {len(descs):02d}")
                fh.write(
                    json.dumps({"note_id": note_id, "raw": json.dumps({"diagnoses": descs[:20]})})
                    + "\n"
                )
        gen_dir = tmp_path / "gen"
        assert main(["replay", "--raw", str(raw_path), "--out", str(gen_dir)]) == 0
        map_dir = tmp_path / "map"
        assert (
            main(
                [
                    "map",
                    "--generations", str(gen_dir / "generations.jsonl"),
                    "--codes", str(corpus_dir / "codes.csv"),
                    "--strategy", "exact-then-lexical",
                    "--out", str(map_dir),
                ]
            )
            == 0
        )
        score_dir = tmp_path / "sc"
        assert (
            main(
                [
                    "score",
                    "--predictions", str(map_dir / "mapped.jsonl"),
                    "--generations", str(gen_dir / "generations.jsonl"),
                    "--mapped", str(map_dir / "mapped.jsonl"),
                    *common,
                    "--out", str(score_dir),
                ]
            )
            == 0
        )
        report = json.loads((score_dir / "report.json").read_text())
        assert report["md_acc"] == 1.0
        assert report["valid_json_rate"] == 1.0

    def test_compile_schema_cache(self, tmp_path, monkeypatch):
        from conftest import byte_vocab

        vocab_path = tmp_path / "vocab.jsonl"
        byte_vocab(include_space=False).to_file(vocab_path)
        out = tmp_path / "auto"
        assert main(["compile-schema", "--mode", "plain", "--vocab", str(vocab_path), "--out", str(out)]) == 0
        assert (out / "automaton.bin").exists()
        cache = tmp_path / "cache"
        cache.mkdir()
        monkeypatch.setenv("CLINIBENCH_CACHE", str(cache))
        assert main(["compile-schema", "--mode", "plain", "--vocab", str(vocab_path)]) == 0
        assert list(cache.glob("*.bin"))


class TestErrors:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_missing_file_exits_1(self, tmp_path, capsys):
        rc = main(
            [
                "split",
                "--notes", str(tmp_path / "nope.jsonl"),
                "--codes", str(tmp_path / "nope.csv"),
                "--out", str(tmp_path / "o"),
            ]
        )
        assert rc == 1
        err = capsys.readouterr().err
        assert json.loads(err)["error"]

    def test_config_file_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('[synth]\nseed = 9\nnotes-count = 30\ncodes-count = 8\n')
        out = tmp_path / "o"
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        manifest = read_manifest(out)
        assert manifest["seed"] == 9
        # flag wins over config
        out2 = tmp_path / "o2"
        assert main(["synth", "--config", str(cfg), "--seed", "4", "--out", str(out2)]) == 0
        assert read_manifest(out2)["seed"] == 4
