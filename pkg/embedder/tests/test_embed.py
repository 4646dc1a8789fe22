import json

import numpy as np
import pytest

from clinibench_embedder.embed import EmbeddingJob, IoError, embed, read_texts
from clinibench_embedder.fake import embed_texts, projection_matrix, embed_text


def write_texts(path, items):
    with open(path, "w", encoding="utf-8") as fh:
        for item_id, text in items:
            fh.write(json.dumps({"id": item_id, "text": text}) + "\n")


class TestFake:
    def test_identical_text_identical_vector(self):
        a, b = embed_texts(["hello world", "hello world"], "m", 16, True)
        assert np.array_equal(a, b)

    def test_similar_text_closer_than_unrelated(self):
        vecs = embed_texts(
            ["acute renal failure", "acute renal failures", "quantum flux capacitor"],
            "m", 32, True,
        )
        close = float(vecs[0] @ vecs[1])
        far = float(vecs[0] @ vecs[2])
        assert close > far

    def test_normalized(self):
        (vec,) = embed_texts(["anything"], "m", 24, True)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-5)

    def test_model_name_changes_projection(self):
        a = embed_text("text", projection_matrix("m1", 16), True)
        b = embed_text("text", projection_matrix("m2", 16), True)
        assert not np.array_equal(a, b)


class TestJob:
    def test_embed_writes_vector_file(self, tmp_path):
        inp = tmp_path / "texts.jsonl"
        out = tmp_path / "vecs.bin"
        write_texts(inp, [("a", "first text"), ("b", "second text")])
        count = embed(EmbeddingJob(str(inp), str(out), dim=16))
        assert count == 2
        header = json.loads(out.read_bytes().split(b"\n", 1)[0])
        assert header == {"dim": 16, "count": 2, "normalized": True}

    def test_bad_input_raises(self, tmp_path):
        inp = tmp_path / "texts.jsonl"
        inp.write_text("{bad json\n")
        with pytest.raises(IoError):
            read_texts(inp)

    def test_missing_input(self, tmp_path):
        with pytest.raises(IoError):
            embed(EmbeddingJob(str(tmp_path / "nope.jsonl"), str(tmp_path / "o.bin")))
