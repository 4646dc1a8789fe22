"""Map generated diagnosis descriptions to 3-digit ICD classes.

Matching runs against both the short and the long description of every
full code; the winning full code is truncated afterwards, so several
description variants can resolve to one class. Exact matching normalizes
case, whitespace and trailing punctuation; lexical matching is BM25 over
the description pool and discards descriptions sharing no term with it;
embedding matching is exact cosine search and never discards.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .corpus import CodeTable
from .errors import InvalidVector
from .guided import GenerationRecord
from .retrieval import Bm25Index, DenseIndex, tokenize

_TRAILING_PUNCT = re.compile(r"[\s.,;:!?]+$")
_WS_RUN = re.compile(r"\s+")


class Provenance(str, Enum):
    EXACT = "exact"
    LEXICAL = "lexical"
    EMBEDDING = "embedding"
    DISCARDED = "discarded"


class MapStrategy(str, Enum):
    EXACT_THEN_EMBEDDING = "exact-then-embedding"
    EXACT_THEN_LEXICAL = "exact-then-lexical"
    EMBEDDING_ONLY = "embedding-only"
    LEXICAL_ONLY = "lexical-only"


def normalize_desc(text: str) -> str:
    return _WS_RUN.sub(" ", _TRAILING_PUNCT.sub("", text.casefold())).strip()


def text_key(text: str) -> str:
    """Stable id for a description text in vector files."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MappedItem:
    code: str | None  # short code; None iff discarded
    provenance: Provenance
    source_text: str
    score: float


@dataclass
class MappedPrediction:
    note_id: str
    items: list[MappedItem]  # resolved codes (deduplicated) + discarded entries
    provenance_counts: dict[str, int]  # pre-dedup, partitions the descriptions

    def codes(self) -> list[str]:
        return [item.code for item in self.items if item.code is not None]


class CodeMatcher:
    """Immutable per-code-table matching indexes, shared across notes."""

    def __init__(self, code_table: CodeTable):
        candidates: list[tuple[str, str]] = []  # (short_code, description)
        for entry in sorted(code_table.entries, key=lambda e: (e.version, e.full_code)):
            for desc in (entry.short_desc, entry.long_desc):
                if desc:
                    candidates.append((entry.short_code, desc))
        self.cand_ids = [f"c{i:06d}" for i in range(len(candidates))]
        self.cand_short = {cid: short for cid, (short, _) in zip(self.cand_ids, candidates)}
        self.cand_text = {cid: desc for cid, (_, desc) in zip(self.cand_ids, candidates)}

        self.exact: dict[str, str] = {}
        for cid in self.cand_ids:
            norm = normalize_desc(self.cand_text[cid])
            short = self.cand_short[cid]
            # deterministic on collisions: lowest short code wins
            if norm not in self.exact or short < self.exact[norm]:
                self.exact[norm] = short
        self.bm25 = Bm25Index({cid: tokenize(self.cand_text[cid]) for cid in self.cand_ids})

    def candidate_texts(self) -> list[tuple[str, str]]:
        """(candidate id, description) pairs, the unit of code-side vectors."""
        return [(cid, self.cand_text[cid]) for cid in self.cand_ids]


def map_exact(description: str, matcher: CodeMatcher) -> str | None:
    """Case/whitespace-insensitive equality against any code description."""
    return matcher.exact.get(normalize_desc(description))


def map_lexical(description: str, matcher: CodeMatcher) -> tuple[str, float] | None:
    """Best BM25-scoring code description; None when no term overlaps."""
    scores = matcher.bm25.scores(tokenize(description))
    best_id, best_score = min(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if best_score <= 0.0:
        return None
    return matcher.cand_short[best_id], best_score


def map_embedding(
    description_vec: np.ndarray,
    code_desc_index: DenseIndex,
    cand_short: Mapping[str, str],
) -> tuple[str, float]:
    """Nearest code description by cosine; always resolves."""
    vec = np.asarray(description_vec, dtype=np.float32)
    if float(np.linalg.norm(vec)) == 0.0:
        raise InvalidVector("description vector has zero norm")
    sims = code_desc_index.cosines(vec)
    best_id, best_score = min(sims.items(), key=lambda kv: (-kv[1], kv[0]))
    return cand_short[best_id], best_score


def map_all(
    record: GenerationRecord,
    strategy: MapStrategy,
    matcher: CodeMatcher,
    desc_vectors: Mapping[str, np.ndarray] | None = None,
    code_desc_index: DenseIndex | None = None,
) -> MappedPrediction:
    """Resolve one generation's descriptions to an ordered, deduplicated
    class list. Exact matches short-circuit the fallback; duplicates keep
    their first occurrence; unresolvable descriptions stay as discarded
    items. provenance_counts tallies every description before dedup."""
    needs_embedding = strategy in (MapStrategy.EXACT_THEN_EMBEDDING, MapStrategy.EMBEDDING_ONLY)
    if needs_embedding and (desc_vectors is None or code_desc_index is None):
        raise InvalidVector(f"strategy {strategy.value} requires description and code vectors")

    counts = {p.value: 0 for p in Provenance}
    items: list[MappedItem] = []
    seen: set[str] = set()
    for desc in record.descriptions:
        code: str | None = None
        score = 0.0
        prov = Provenance.DISCARDED
        if strategy in (MapStrategy.EXACT_THEN_EMBEDDING, MapStrategy.EXACT_THEN_LEXICAL):
            code = map_exact(desc, matcher)
            if code is not None:
                prov, score = Provenance.EXACT, 1.0
        if code is None and strategy in (MapStrategy.EXACT_THEN_LEXICAL, MapStrategy.LEXICAL_ONLY):
            hit = map_lexical(desc, matcher)
            if hit is not None:
                code, score = hit
                prov = Provenance.LEXICAL
        if code is None and needs_embedding:
            key = text_key(desc)
            if key not in desc_vectors:
                raise InvalidVector(f"no vector for description {desc!r} (key {key[:12]}...)")
            code, score = map_embedding(desc_vectors[key], code_desc_index, matcher.cand_short)
            prov = Provenance.EMBEDDING
        counts[prov.value] += 1
        if code is None:
            items.append(MappedItem(None, Provenance.DISCARDED, desc, 0.0))
        elif code not in seen:
            seen.add(code)
            items.append(MappedItem(code, prov, desc, float(score)))
    return MappedPrediction(
        note_id=record.note_id or "", items=items, provenance_counts=counts
    )


def write_predictions(path, predictions: Sequence[MappedPrediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            obj = {
                "note_id": pred.note_id,
                "items": [
                    {
                        "code": item.code,
                        "prov": item.provenance.value,
                        "text": item.source_text,
                        "score": item.score,
                    }
                    for item in pred.items
                ],
                "counts": pred.provenance_counts,
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_predictions(path) -> list[MappedPrediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            items = [
                MappedItem(
                    code=item["code"],
                    provenance=Provenance(item["prov"]),
                    source_text=item["text"],
                    score=float(item["score"]),
                )
                for item in obj["items"]
            ]
            out.append(
                MappedPrediction(
                    note_id=obj["note_id"],
                    items=items,
                    provenance_counts=obj.get("counts", {}),
                )
            )
    return out
