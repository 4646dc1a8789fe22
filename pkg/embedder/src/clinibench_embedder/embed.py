"""Embedding jobs: JSONL of {"id", "text"} in, shared vector file out."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import fake
from .vectors import write_vector_file


class ModelLoadError(Exception):
    pass


class IoError(Exception):
    pass


@dataclass
class EmbeddingJob:
    input_path: str
    output_path: str
    model_name: str = "fake-trigram"
    dim: int = 64
    normalize: bool = True
    use_fake: bool = True


def read_texts(path) -> list[tuple[str, str]]:
    items: list[tuple[str, str]] = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    items.append((str(obj["id"]), str(obj["text"])))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise IoError(f"{path}:{line_no}: bad text record ({exc})") from exc
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return items


def _embed_with_model(texts: list[str], job: EmbeddingJob) -> list[np.ndarray]:
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError as exc:
        raise ModelLoadError(
            "sentence-transformers is not installed; use --fake or install the 'model' extra"
        ) from exc
    try:
        model = SentenceTransformer(job.model_name)
    except Exception as exc:
        raise ModelLoadError(f"cannot load model {job.model_name!r}: {exc}") from exc
    encoded = model.encode(texts, normalize_embeddings=job.normalize)
    return [np.asarray(v, dtype=np.float32) for v in encoded]


def embed(job: EmbeddingJob) -> int:
    """Run one job; returns the number of vectors written."""
    items = read_texts(job.input_path)
    texts = [text for _, text in items]
    if job.use_fake:
        vectors = fake.embed_texts(texts, job.model_name, job.dim, job.normalize)
    else:
        vectors = _embed_with_model(texts, job)
    by_id = {item_id: vec for (item_id, _), vec in zip(items, vectors)}
    try:
        write_vector_file(job.output_path, by_id, normalized=job.normalize)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return len(by_id)
