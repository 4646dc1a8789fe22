"""License-free deterministic embeddings for CI.

A fake embedding is a seeded random projection of character-trigram
counts: identical texts map to identical vectors, and texts sharing many
trigrams land close together, which is all the pipeline's directional
tests need. No model download involved.
"""

from __future__ import annotations

import hashlib

import numpy as np

N_BUCKETS = 4096


def _seed_for(model_name: str, dim: int) -> int:
    digest = hashlib.sha256(f"{model_name}|{dim}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def projection_matrix(model_name: str, dim: int) -> np.ndarray:
    rng = np.random.default_rng(_seed_for(model_name, dim))
    return rng.standard_normal((N_BUCKETS, dim)).astype(np.float32)


def trigram_counts(text: str) -> dict[int, int]:
    padded = f" {text.lower()} "
    counts: dict[int, int] = {}
    for i in range(len(padded) - 2):
        gram = padded[i : i + 3]
        bucket = int.from_bytes(hashlib.sha256(gram.encode("utf-8")).digest()[:4], "little")
        bucket %= N_BUCKETS
        counts[bucket] = counts.get(bucket, 0) + 1
    return counts


def embed_text(text: str, matrix: np.ndarray, normalize: bool) -> np.ndarray:
    dim = matrix.shape[1]
    vec = np.zeros(dim, dtype=np.float32)
    for bucket, count in trigram_counts(text).items():
        vec += np.float32(count) * matrix[bucket]
    if normalize:
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec = (vec / np.float32(norm)).astype(np.float32)
    return vec


def embed_texts(texts, model_name: str, dim: int, normalize: bool) -> list[np.ndarray]:
    matrix = projection_matrix(model_name, dim)
    return [embed_text(text, matrix, normalize) for text in texts]
