"""Top-n multi-label evaluation: macro P/R/F1, MAP, main-diagnosis
accuracy, micro-F1, tertile and input-length breakdowns, and generation
diagnostics.

Conventions: predictions are truncated to the top n before scoring; when a
label registry is supplied, gold labels and predictions outside it are
dropped (labels absent from any split are excluded from evaluation). Macro
averages run over classes with at least one gold occurrence in the scored
split; per-class precision/recall use the zero convention when undefined.
MAP is class-macro: each class's retrieved list is the notes predicting
it, ordered by the class's rank within each note's prediction; an
example-level mean AP is reported alongside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import IdMismatch
from .guided import GenerationRecord
from .mapping import MappedPrediction, Provenance

Predictions = Mapping[str, Sequence[str]]
Gold = Mapping[str, Sequence[str]]


@dataclass(frozen=True)
class EvalConfig:
    n: int = 20
    tertiles: Mapping[str, str] | None = None  # short_code -> head|body|tail
    length_buckets: tuple[int, ...] = ()  # ascending token-count edges
    registry: frozenset[str] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if list(self.length_buckets) != sorted(set(self.length_buckets)):
            raise ValueError("length bucket edges must be strictly increasing")


@dataclass
class MetricReport:
    n: int
    n_notes: int
    macro_recall: float
    macro_precision: float
    macro_f1: float
    map: float
    map_example: float
    md_acc: float
    micro_f1: float
    per_tertile: dict[str, dict[str, float] | None] = field(default_factory=dict)
    per_bucket: dict[str, float | None] = field(default_factory=dict)
    valid_json_rate: float | None = None
    avg_pred_codes: float | None = None
    diagnostics: dict | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_notes": self.n_notes,
            "macro_recall": self.macro_recall,
            "macro_precision": self.macro_precision,
            "macro_f1": self.macro_f1,
            "map": self.map,
            "map_example": self.map_example,
            "md_acc": self.md_acc,
            "micro_f1": self.micro_f1,
            "per_tertile": self.per_tertile,
            "per_bucket": self.per_bucket,
            "valid_json_rate": self.valid_json_rate,
            "avg_pred_codes": self.avg_pred_codes,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def as_code_lists(predictions) -> dict[str, list[str]]:
    """Accept MappedPrediction sequences or plain {note_id: codes} maps."""
    if isinstance(predictions, Mapping):
        return {k: list(v) for k, v in predictions.items()}
    out = {}
    for pred in predictions:
        if isinstance(pred, MappedPrediction):
            out[pred.note_id] = pred.codes()
        else:
            raise TypeError(f"cannot interpret predictions of type {type(pred).__name__}")
    return out


def _prepare(
    predictions, gold: Gold, cfg: EvalConfig
) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    preds = as_code_lists(predictions)
    if set(preds) != set(gold):
        diff = set(preds) ^ set(gold)
        raise IdMismatch(f"prediction/gold note ids differ on {sorted(diff)[:5]}")
    clean_preds = {}
    clean_gold = {}
    for note_id in gold:
        p = list(preds[note_id])[: cfg.n]
        g = list(gold[note_id])
        if cfg.registry is not None:
            p = [c for c in p if c in cfg.registry]
            g = [c for c in g if c in cfg.registry]
        clean_preds[note_id] = p
        clean_gold[note_id] = g
    return clean_preds, clean_gold


def _class_tallies(preds: dict[str, list[str]], gold: dict[str, list[str]]):
    tallies: dict[str, list[int]] = {}  # class -> [tp, fp, fn]
    for note_id in gold:
        pset = set(preds[note_id])
        gset = set(gold[note_id])
        for code in pset | gset:
            cell = tallies.setdefault(code, [0, 0, 0])
            if code in pset and code in gset:
                cell[0] += 1
            elif code in pset:
                cell[1] += 1
            else:
                cell[2] += 1
    return tallies


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _average_precision(ranked: list[str], relevant: set[str]) -> float:
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for rank, item in enumerate(ranked, start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def _class_map(preds: dict[str, list[str]], gold_classes: set[str], gold: dict[str, list[str]]) -> float:
    if not gold_classes:
        return 0.0
    # position of each class within each note's prediction list
    position: dict[str, list[tuple[int, str]]] = {}
    for note_id in sorted(preds):
        for rank, code in enumerate(preds[note_id]):
            position.setdefault(code, []).append((rank, note_id))
    total = 0.0
    for code in gold_classes:
        retrieved = [note_id for _, note_id in sorted(position.get(code, []))]
        relevant = {note_id for note_id, labels in gold.items() if code in labels}
        total += _average_precision(retrieved, relevant)
    return total / len(gold_classes)


def score(predictions, gold: Gold, cfg: EvalConfig = EvalConfig()) -> MetricReport:
    """Full metric suite over aligned predictions and gold labels."""
    preds, clean_gold = _prepare(predictions, gold, cfg)
    tallies = _class_tallies(preds, clean_gold)
    gold_classes = {c for labels in clean_gold.values() for c in labels}

    per_class = {c: _prf(*tallies[c]) for c in gold_classes}
    n_cls = len(gold_classes)
    macro_precision = sum(p for p, _, _ in per_class.values()) / n_cls if n_cls else 0.0
    macro_recall = sum(r for _, r, _ in per_class.values()) / n_cls if n_cls else 0.0
    macro_f1 = sum(f for _, _, f in per_class.values()) / n_cls if n_cls else 0.0

    tp = sum(cell[0] for cell in tallies.values())
    fp = sum(cell[1] for cell in tallies.values())
    fn = sum(cell[2] for cell in tallies.values())
    _, _, micro_f1 = _prf(tp, fp, fn)

    md_hits = 0
    md_total = 0
    for note_id, labels in clean_gold.items():
        if not labels:
            continue
        md_total += 1
        if labels[0] in set(preds[note_id]):
            md_hits += 1
    md_acc = md_hits / md_total if md_total else 0.0

    class_map = _class_map(preds, gold_classes, {k: set(v) for k, v in clean_gold.items()})
    example_aps = [
        _average_precision(preds[note_id], set(labels))
        for note_id, labels in clean_gold.items()
        if labels
    ]
    map_example = sum(example_aps) / len(example_aps) if example_aps else 0.0

    report = MetricReport(
        n=cfg.n,
        n_notes=len(clean_gold),
        macro_recall=macro_recall,
        macro_precision=macro_precision,
        macro_f1=macro_f1,
        map=class_map,
        map_example=map_example,
        md_acc=md_acc,
        micro_f1=micro_f1,
    )
    if cfg.tertiles is not None:
        report.per_tertile = tertile_breakdown(predictions, gold, cfg)
    return report


def tertile_breakdown(predictions, gold: Gold, cfg: EvalConfig) -> dict[str, dict[str, float] | None]:
    """Macro recall/precision restricted to each frequency tertile; null
    when a tertile has no gold-occurring class."""
    if cfg.tertiles is None:
        raise ValueError("EvalConfig.tertiles is required for a tertile breakdown")
    preds, clean_gold = _prepare(predictions, gold, cfg)
    tallies = _class_tallies(preds, clean_gold)
    gold_classes = {c for labels in clean_gold.values() for c in labels}
    out: dict[str, dict[str, float] | None] = {}
    for tertile in ("head", "body", "tail"):
        classes = [c for c in gold_classes if cfg.tertiles.get(c) == tertile]
        if not classes:
            out[tertile] = None
            continue
        prf = [_prf(*tallies[c]) for c in classes]
        out[tertile] = {
            "recall": sum(r for _, r, _ in prf) / len(prf),
            "precision": sum(p for p, _, _ in prf) / len(prf),
        }
    return out


def _bucket_labels(edges: Sequence[int]) -> list[str]:
    if not edges:
        return ["all"]
    labels = [f"<={edges[0]}"]
    for lo, hi in zip(edges, edges[1:]):
        labels.append(f"{lo + 1}-{hi}")
    labels.append(f">{edges[-1]}")
    return labels


def _bucket_of(count: int, edges: Sequence[int]) -> int:
    for i, edge in enumerate(edges):
        if count <= edge:
            return i
    return len(edges)


def length_breakdown(
    predictions,
    gold: Gold,
    token_counts: Mapping[str, int],
    cfg: EvalConfig,
) -> dict[str, float | None]:
    """Micro-F1 pooled within each input-length bucket."""
    preds, clean_gold = _prepare(predictions, gold, cfg)
    missing = set(clean_gold) - set(token_counts)
    if missing:
        raise IdMismatch(f"token counts missing for {sorted(missing)[:5]}")
    labels = _bucket_labels(cfg.length_buckets)
    cells = [[0, 0, 0] for _ in labels]
    occupied = [False] * len(labels)
    for note_id in clean_gold:
        idx = _bucket_of(token_counts[note_id], cfg.length_buckets)
        occupied[idx] = True
        pset = set(preds[note_id])
        gset = set(clean_gold[note_id])
        cells[idx][0] += len(pset & gset)
        cells[idx][1] += len(pset - gset)
        cells[idx][2] += len(gset - pset)
    out: dict[str, float | None] = {}
    for label, cell, seen in zip(labels, cells, occupied):
        out[label] = _prf(*cell)[2] if seen else None
    return out


def generation_diagnostics(
    records: Sequence[GenerationRecord],
    mapped: Sequence[MappedPrediction],
    gold: Gold,
) -> dict:
    """Output-quality counters: valid-JSON rate, prediction counts after
    dedup, discard shares before and after dedup, and per-provenance
    accuracy against gold."""
    by_id = {rec.note_id: rec for rec in records}
    if set(by_id) != {pred.note_id for pred in mapped} or not set(by_id) <= set(gold):
        raise IdMismatch("generation records, mapped predictions and gold must align")

    n = len(mapped)
    valid_json_rate = sum(1 for rec in records if rec.valid_json) / n if n else 0.0
    avg_pred_codes = sum(len(pred.codes()) for pred in mapped) / n if n else 0.0
    avg_descriptions = sum(by_id[p.note_id].diagnosis_count for p in mapped) / n if n else 0.0

    total_desc = 0
    counts = {p.value: 0 for p in Provenance}
    for pred in mapped:
        for prov, c in pred.provenance_counts.items():
            counts[prov] += c
            total_desc += c

    item_hits = {p.value: 0 for p in Provenance}
    item_totals = {p.value: 0 for p in Provenance}
    total_items = 0
    discarded_items = 0
    for pred in mapped:
        gset = set(gold[pred.note_id])
        for item in pred.items:
            total_items += 1
            key = item.provenance.value
            if item.code is None:
                discarded_items += 1
                continue
            item_totals[key] += 1
            if item.code in gset:
                item_hits[key] += 1

    accuracy = {
        prov: (item_hits[prov] / item_totals[prov]) if item_totals[prov] else None
        for prov in (Provenance.EXACT.value, Provenance.LEXICAL.value, Provenance.EMBEDDING.value)
    }
    return {
        "valid_json_rate": valid_json_rate,
        "avg_pred_codes": avg_pred_codes,
        "avg_descriptions": avg_descriptions,
        "exact_match_share": counts[Provenance.EXACT.value] / total_desc if total_desc else 0.0,
        "discarded_share": counts[Provenance.DISCARDED.value] / total_desc if total_desc else 0.0,
        "discarded_share_postdedup": discarded_items / total_items if total_items else 0.0,
        "provenance_counts": counts,
        "provenance_accuracy": accuracy,
    }
