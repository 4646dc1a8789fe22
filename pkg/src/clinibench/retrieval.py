"""Similar-patient retrieval over the training split.

Five strategies feed the few-shot pipeline: Okapi BM25 over note text,
dense cosine retrieval over externally produced vectors (semantic or
latent-outcome), the gold heuristic (Otsuka similarity of annotated label
sets), and seeded random sampling. majority_vote turns retrieved
neighbors into the non-generative baseline prediction.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import LabeledNote
from .errors import DimensionMismatch, EmptyCorpus, InvalidVector, KTooLarge

_TOKEN_RE = re.compile(r"[^0-9a-z]+")

BM25_K1 = 1.2
BM25_B = 0.75


def tokenize(text: str) -> list[str]:
    """Lowercase, strip non-alphanumerics, split on whitespace. No stemming."""
    return [t for t in _TOKEN_RE.sub(" ", text.lower()).split() if t]


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    ranked: tuple[tuple[str, float], ...]  # (doc_id, score), score desc / doc_id asc


def _rank(scores: Mapping[str, float], k: int, exclude: str | None) -> tuple[tuple[str, float], ...]:
    items = [(d, s) for d, s in scores.items() if d != exclude]
    items.sort(key=lambda ds: (-ds[1], ds[0]))
    return tuple(items[:k])


class Bm25Index:
    """Okapi BM25 inverted index over lowercased note text.

    idf = ln((N - df + 0.5) / (df + 0.5) + 1), which is non-negative.
    A query term's contribution scales linearly with its query frequency.
    Immutable after construction; concurrent queries need no locking.
    """

    def __init__(self, docs: Mapping[str, Sequence[str]], k1: float = BM25_K1, b: float = BM25_B):
        if not docs:
            raise EmptyCorpus("BM25 index needs at least one document")
        if k1 <= 0 or not (0.0 <= b <= 1.0):
            raise ValueError(f"bad BM25 parameters k1={k1}, b={b}")
        self.k1 = k1
        self.b = b
        self.doc_len: dict[str, int] = {}
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_freq: dict[str, int] = {}
        for doc_id in sorted(docs):
            tokens = docs[doc_id]
            self.doc_len[doc_id] = len(tokens)
            counts: dict[str, int] = {}
            for tok in tokens:
                counts[tok] = counts.get(tok, 0) + 1
            for term, tf in counts.items():
                self.postings.setdefault(term, []).append((doc_id, tf))
                self.doc_freq[term] = self.doc_freq.get(term, 0) + 1
        self.n_docs = len(self.doc_len)
        self.avg_doc_len = sum(self.doc_len.values()) / self.n_docs

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def scores(self, query_tokens: Sequence[str]) -> dict[str, float]:
        """BM25 score per document. Terms are accumulated in sorted order so
        floating-point results are reproducible regardless of query order."""
        qtf: dict[str, int] = {}
        for tok in query_tokens:
            qtf[tok] = qtf.get(tok, 0) + 1
        scores: dict[str, float] = {doc_id: 0.0 for doc_id in self.doc_len}
        for term in sorted(qtf):
            if term not in self.postings:
                continue
            idf = self.idf(term)
            for doc_id, tf in self.postings[term]:
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_len[doc_id] / self.avg_doc_len)
                scores[doc_id] += qtf[term] * idf * tf * (self.k1 + 1.0) / (tf + norm)
        return scores

    @classmethod
    def from_notes(cls, notes: Iterable[LabeledNote], k1: float = BM25_K1, b: float = BM25_B) -> "Bm25Index":
        return cls({n.note_id: tokenize(n.note.full_text) for n in notes}, k1=k1, b=b)

    def to_json(self) -> dict:
        return {
            "kind": "bm25",
            "k1": self.k1,
            "b": self.b,
            "doc_len": self.doc_len,
            "postings": {t: [[d, f] for d, f in p] for t, p in self.postings.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Bm25Index":
        index = cls.__new__(cls)
        index.k1 = float(obj["k1"])
        index.b = float(obj["b"])
        index.doc_len = {d: int(v) for d, v in obj["doc_len"].items()}
        index.postings = {t: [(d, int(f)) for d, f in p] for t, p in obj["postings"].items()}
        index.doc_freq = {t: len(p) for t, p in index.postings.items()}
        index.n_docs = len(index.doc_len)
        index.avg_doc_len = sum(index.doc_len.values()) / index.n_docs
        return index


def build_bm25(train_notes: Sequence[LabeledNote], k1: float = BM25_K1, b: float = BM25_B) -> Bm25Index:
    return Bm25Index.from_notes(train_notes, k1=k1, b=b)


class DenseIndex:
    """Exact cosine-similarity search over float32 vectors."""

    def __init__(self, vectors: Mapping[str, np.ndarray], normalized: bool = False):
        if not vectors:
            raise EmptyCorpus("dense index needs at least one vector")
        self.ids = sorted(vectors)
        first = np.asarray(vectors[self.ids[0]], dtype=np.float32)
        self.dim = int(first.shape[0])
        rows = []
        for doc_id in self.ids:
            v = np.asarray(vectors[doc_id], dtype=np.float32)
            if v.shape != (self.dim,):
                raise DimensionMismatch(f"vector {doc_id!r} has shape {v.shape}, expected ({self.dim},)")
            rows.append(v)
        self.matrix = np.stack(rows)
        self.normalized = normalized
        if normalized:
            norms = np.linalg.norm(self.matrix, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise InvalidVector("normalized index contains non-unit vectors")
        self._norms = np.linalg.norm(self.matrix, axis=1)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in set(self.ids)

    def vector(self, doc_id: str) -> np.ndarray:
        return self.matrix[self.ids.index(doc_id)]

    def cosines(self, query: np.ndarray) -> dict[str, float]:
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.dim,):
            raise DimensionMismatch(f"query has shape {q.shape}, expected ({self.dim},)")
        qn = float(np.linalg.norm(q))
        dots = self.matrix @ q
        if self.normalized and abs(qn - 1.0) <= 1e-4:
            sims = dots
        else:
            denom = self._norms * qn
            sims = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
        return {doc_id: float(s) for doc_id, s in zip(self.ids, sims)}


def retrieve(
    index: Bm25Index | DenseIndex,
    query,
    k: int,
    query_id: str | None = None,
) -> RetrievalResult:
    """Top-k most similar training documents, excluding the query itself.

    `query` is an AdmissionNote (or raw text / token list) for a Bm25Index
    and a vector for a DenseIndex. Ties break by ascending doc id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(index, Bm25Index):
        if hasattr(query, "full_text"):
            tokens = tokenize(query.full_text)
        elif isinstance(query, str):
            tokens = tokenize(query)
        else:
            tokens = list(query)
        scores = index.scores(tokens)
    else:
        scores = index.cosines(query)
    qid = query_id or (query.note_id if hasattr(query, "note_id") else "")
    return RetrievalResult(query_id=qid, ranked=_rank(scores, k, query_id))


def otsuka(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    """Otsuka similarity |A∩B| / sqrt(|A|·|B|); 0 when either set is empty."""
    if not a or not b:
        return 0.0
    return len(a & b) / math.sqrt(len(a) * len(b))


def gold_heuristic(
    query_labels: set[str],
    train_notes: Sequence[LabeledNote],
    k: int,
    query_id: str | None = None,
    use_full_codes: bool = False,
) -> RetrievalResult:
    """Ideal retriever: rank training notes by label-set Otsuka similarity.

    Uses truncated short codes by default; `use_full_codes` switches to the
    annotated full codes.
    """
    q = frozenset(query_labels)
    scores = {}
    for note in train_notes:
        labels = note.full_labels if use_full_codes else note.labels
        scores[note.note_id] = otsuka(q, frozenset(labels))
    return RetrievalResult(query_id=query_id or "", ranked=_rank(scores, k, query_id))


def random_retrieve(
    train_ids: Sequence[str],
    k: int,
    seed: int,
    query_id: str = "",
) -> RetrievalResult:
    """Uniform sample of k training documents without replacement.

    Deterministic per (query_id, seed). All scores are zero, so the ranked
    order is ascending doc id like any all-tie result.
    """
    if k > len(train_ids):
        raise KTooLarge(f"k={k} exceeds {len(train_ids)} training documents")
    pool = sorted(set(train_ids) - {query_id})
    if k > len(pool):
        raise KTooLarge(f"k={k} exceeds {len(pool)} eligible documents")
    digest = hashlib.sha256(f"{seed}|{query_id}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    picked = rng.choice(len(pool), size=k, replace=False)
    ranked = tuple((pool[i], 0.0) for i in sorted(picked))
    return RetrievalResult(query_id=query_id, ranked=ranked)


def majority_vote(
    neighbors: RetrievalResult,
    train_labels: Mapping[str, Sequence[str]],
    top_n: int = 20,
) -> list[str]:
    """Most frequent labels among the retrieved neighbors.

    Rank key: frequency desc, then the best (lowest) rank of a neighbor
    holding the label, then the short code itself. Labels from more
    similar documents therefore win frequency ties.
    """
    if not neighbors.ranked:
        raise EmptyCorpus("majority_vote needs at least one neighbor")
    freq: dict[str, int] = {}
    best_rank: dict[str, int] = {}
    for rank, (doc_id, _score) in enumerate(neighbors.ranked):
        for label in set(train_labels[doc_id]):
            freq[label] = freq.get(label, 0) + 1
            if label not in best_rank:
                best_rank[label] = rank
    ordered = sorted(freq, key=lambda c: (-freq[c], best_rank[c], c))
    return ordered[:top_n]


# Vector file format, shared with the embedding exporter: one JSON header
# line {"dim": d, "count": n, "normalized": bool}, then n binary records of
# (u16 LE id length, id bytes UTF-8, d float32 LE).


def write_vectors(path, vectors: Mapping[str, np.ndarray], normalized: bool) -> None:
    ids = sorted(vectors)
    if not ids:
        raise EmptyCorpus("no vectors to write")
    dim = int(np.asarray(vectors[ids[0]]).shape[0])
    header = json.dumps({"dim": dim, "count": len(ids), "normalized": bool(normalized)})
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        for doc_id in ids:
            v = np.asarray(vectors[doc_id], dtype="<f4")
            if v.shape != (dim,):
                raise DimensionMismatch(f"vector {doc_id!r} has dim {v.shape}, expected ({dim},)")
            id_bytes = doc_id.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(v.tobytes())


def read_vectors(path) -> tuple[dict[str, np.ndarray], bool]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
            dim, count, normalized = int(header["dim"]), int(header["count"]), bool(header["normalized"])
        except (ValueError, KeyError) as exc:
            raise InvalidVector(f"bad vector file header in {path}: {exc}") from exc
        vectors: dict[str, np.ndarray] = {}
        for _ in range(count):
            raw_len = fh.read(2)
            if len(raw_len) != 2:
                raise InvalidVector(f"truncated vector file {path}")
            (id_len,) = struct.unpack("<H", raw_len)
            doc_id = fh.read(id_len).decode("utf-8")
            buf = fh.read(4 * dim)
            if len(buf) != 4 * dim:
                raise InvalidVector(f"truncated vector record {doc_id!r} in {path}")
            vectors[doc_id] = np.frombuffer(buf, dtype="<f4").copy()
    return vectors, normalized


def load_dense_index(path) -> DenseIndex:
    vectors, normalized = read_vectors(path)
    return DenseIndex(vectors, normalized=normalized)


def write_results(path, results: Iterable[RetrievalResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            obj = {"query_id": res.query_id, "ranked": [[d, s] for d, s in res.ranked]}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_results(path) -> list[RetrievalResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                RetrievalResult(
                    query_id=obj["query_id"],
                    ranked=tuple((d, float(s)) for d, s in obj["ranked"]),
                )
            )
    return out
