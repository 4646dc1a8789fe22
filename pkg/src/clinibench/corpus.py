"""Labeled corpus construction: note ingest, ICD code tables, splits and statistics.

Notes arrive pre-sectioned as JSONL; only the sections known at admission
time are accepted. ICD labels are truncated to their 3-character category
("short code") and deduplicated per note, keeping annotation order. The
first label of a note is its main diagnosis.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    CodeTableError,
    EmptyCorpus,
    ForbiddenSection,
    MalformedRecord,
    UnknownCode,
)

# Sections known at admission time, in canonical rendering order.
ADMISSION_SECTIONS = (
    "Chief Complaint",
    "Major Surgical or Invasive Procedure",
    "Allergies",
    "History of Present Illness",
    "Past Medical History",
    "Social History",
    "Family History",
    "Physical Exam at Admission",
    "Medication at Admission",
)

# Sections that leak outcome information; their presence fails ingest.
OUTCOME_SECTIONS = frozenset(
    {
        "Physical Exam during Stay and at Discharge",
        "Pertinent Results",
        "Brief Hospital Course",
        "Medication at Discharge",
        "Discharge Disposition",
        "Facility",
        "Discharge Diagnosis",
        "Discharge Condition",
        "Discharge Instructions",
        "Followup Instructions",
    }
)

_SECTION_ORDER = {name: i for i, name in enumerate(ADMISSION_SECTIONS)}

SPLIT_RATIOS = (0.7, 0.1, 0.2)
SPLIT_NAMES = ("train", "val", "test")
TERTILE_NAMES = ("head", "body", "tail")


def truncate_code(full_code: str) -> str:
    """3-character ICD category of a full code (decimal point removed).

    Applies uniformly to ICD-9 (numeric, E/V prefixed) and ICD-10
    (alphanumeric) codes. Idempotent: truncating a short code is a no-op.
    """
    stripped = full_code.replace(".", "").strip()
    if len(stripped) < 3:
        raise CodeTableError(f"code {full_code!r} shorter than 3 characters after truncation")
    return stripped[:3]


@dataclass(frozen=True)
class AdmissionNote:
    """A pre-sectioned admission note; only admission-time sections allowed."""

    note_id: str
    sections: tuple[tuple[str, str], ...]  # (name, text), canonical order

    def __post_init__(self):
        for name, _ in self.sections:
            if name not in _SECTION_ORDER:
                raise ForbiddenSection(name, self.note_id)
        ordered = tuple(sorted(self.sections, key=lambda kv: _SECTION_ORDER[kv[0]]))
        object.__setattr__(self, "sections", ordered)

    @property
    def full_text(self) -> str:
        parts = [f"{name}:\n{text}" for name, text in self.sections]
        return "\n\n".join(parts)


@dataclass(frozen=True)
class IcdEntry:
    full_code: str
    version: int  # 9 or 10
    short_desc: str
    long_desc: str

    @property
    def short_code(self) -> str:
        return truncate_code(self.full_code)


class CodeTable:
    """ICD ontology slice with lookups by full code and by 3-character category."""

    def __init__(self, entries: Iterable[IcdEntry]):
        self.entries: list[IcdEntry] = []
        self._by_full: dict[tuple[str, int], IcdEntry] = {}
        self._by_short: dict[str, list[IcdEntry]] = {}
        for entry in entries:
            key = (entry.full_code, entry.version)
            if key in self._by_full:
                raise CodeTableError(f"duplicate code table entry {key}")
            self._by_full[key] = entry
            self._by_short.setdefault(entry.short_code, []).append(entry)
            self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def has_short(self, short_code: str) -> bool:
        return short_code in self._by_short

    def short_codes(self) -> list[str]:
        return sorted(self._by_short)

    def entries_for_short(self, short_code: str) -> list[IcdEntry]:
        return self._by_short.get(short_code, [])

    @classmethod
    def from_csv(cls, path) -> "CodeTable":
        entries = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"full_code", "version", "short_desc", "long_desc"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise CodeTableError(f"code table {path} missing columns {required}")
            for row in reader:
                version = str(row["version"]).strip().upper().removeprefix("ICD")
                if version not in {"9", "10"}:
                    raise CodeTableError(f"bad ICD version {row['version']!r} in {path}")
                entries.append(
                    IcdEntry(
                        full_code=row["full_code"].strip(),
                        version=int(version),
                        short_desc=row["short_desc"].strip(),
                        long_desc=row["long_desc"].strip(),
                    )
                )
        return cls(entries)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["full_code", "version", "short_desc", "long_desc"])
            for e in self.entries:
                writer.writerow([e.full_code, e.version, e.short_desc, e.long_desc])


@dataclass(frozen=True)
class LabeledNote:
    """Admission note with ordered, truncated, deduplicated diagnosis labels.

    labels[0] is the main diagnosis. full_labels keeps the original
    (deduplicated) full codes for stats and full-code retrieval variants.
    """

    note: AdmissionNote
    labels: tuple[str, ...]
    full_labels: tuple[str, ...]
    module: str  # "hosp" | "icu"
    version: int  # 9 | 10

    @property
    def note_id(self) -> str:
        return self.note.note_id


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    label_registry: frozenset[str]
    tertiles: dict[str, str]  # short_code -> head|body|tail
    tertile_thresholds: tuple[int, int]  # (tail_max_count, head_min_count)
    seed: int

    def ids_for(self, name: str) -> tuple[str, ...]:
        return {"train": self.train_ids, "val": self.val_ids, "test": self.test_ids}[name]

    def to_json(self) -> str:
        payload = {
            "train": list(self.train_ids),
            "val": list(self.val_ids),
            "test": list(self.test_ids),
            "registry": sorted(self.label_registry),
            "tertiles": dict(sorted(self.tertiles.items())),
            "tertile_thresholds": list(self.tertile_thresholds),
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        payload = json.loads(text)
        return cls(
            train_ids=tuple(payload["train"]),
            val_ids=tuple(payload["val"]),
            test_ids=tuple(payload["test"]),
            label_registry=frozenset(payload["registry"]),
            tertiles=dict(payload["tertiles"]),
            tertile_thresholds=tuple(payload.get("tertile_thresholds", (0, 0))),
            seed=int(payload["seed"]),
        )


@dataclass
class CorpusStats:
    n_notes: int
    n_full_codes: int
    n_short_codes: int
    avg_codes_per_note: float
    avg_tokens_per_note: float
    tertile_thresholds: tuple[int, int]
    per_split_notes: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_notes": self.n_notes,
            "n_full_codes": self.n_full_codes,
            "n_short_codes": self.n_short_codes,
            "avg_codes_per_note": self.avg_codes_per_note,
            "avg_tokens_per_note": self.avg_tokens_per_note,
            "tertile_thresholds": list(self.tertile_thresholds),
            "per_split_notes": self.per_split_notes,
        }


def _parse_record(obj: dict, code_table: CodeTable, line_no: int) -> LabeledNote:
    try:
        note_id = str(obj["note_id"])
        sections = obj["sections"]
        labels = obj["labels"]
        module = obj["module"]
        version = int(obj["icd_version"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"missing or bad field ({exc})", line_no) from exc
    if not isinstance(sections, dict) or not isinstance(labels, list) or not labels:
        raise MalformedRecord("sections must be an object and labels a nonempty array", line_no)
    if module not in {"hosp", "icu"} or version not in {9, 10}:
        raise MalformedRecord(f"bad module/icd_version {module!r}/{version!r}", line_no)

    for name in sections:
        if name not in _SECTION_ORDER:
            raise ForbiddenSection(name, note_id)
    note = AdmissionNote(note_id=note_id, sections=tuple((k, str(v)) for k, v in sections.items()))

    short_labels: list[str] = []
    full_labels: list[str] = []
    seen: set[str] = set()
    for raw in labels:
        code = str(raw).strip()
        try:
            short = truncate_code(code)
        except CodeTableError as exc:
            raise UnknownCode(code, note_id) from exc
        if not code_table.has_short(short):
            raise UnknownCode(code, note_id)
        if short in seen:
            continue
        seen.add(short)
        short_labels.append(short)
        full_labels.append(code)
    return LabeledNote(
        note=note,
        labels=tuple(short_labels),
        full_labels=tuple(full_labels),
        module=module,
        version=version,
    )


def notes_from_records(records: Iterable[dict], code_table: CodeTable) -> list[LabeledNote]:
    """Parse already-deserialized note records (e.g. synthetic ones)."""
    return [_parse_record(obj, code_table, i) for i, obj in enumerate(records, start=1)]


def ingest_notes(path, code_table: CodeTable) -> list[LabeledNote]:
    """Load labeled notes from a JSONL file, validating sections and labels.

    Raises MalformedRecord (with line number), UnknownCode, or
    ForbiddenSection on the first offending record.
    """
    notes: list[LabeledNote] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON: {exc.msg}", line_no) from exc
            notes.append(_parse_record(obj, code_table, line_no))
    return notes


def write_notes(path, notes: Sequence[LabeledNote]) -> None:
    """Write notes back out in the ingest JSONL schema (labels are full codes)."""
    with open(path, "w", encoding="utf-8") as fh:
        for n in notes:
            obj = {
                "note_id": n.note_id,
                "sections": {k: v for k, v in n.note.sections},
                "labels": list(n.full_labels),
                "module": n.module,
                "icd_version": n.version,
            }
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


def _largest_remainder(total: int, ratios: Sequence[float]) -> list[int]:
    ideal = [total * r for r in ratios]
    counts = [int(x) for x in ideal]
    remainders = sorted(
        range(len(ratios)),
        key=lambda i: (-(ideal[i] - counts[i]), i),
    )
    shortfall = total - sum(counts)
    for i in remainders[:shortfall]:
        counts[i] += 1
    return counts


def _rng_for(seed: int, *parts: str) -> np.random.Generator:
    digest = hashlib.sha256(("|".join([str(seed), *parts])).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def stratified_split(
    notes: Sequence[LabeledNote],
    ratios: tuple[float, float, float] = SPLIT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """Deterministic stratified 70/10/20 split keyed by main diagnosis.

    Global split sizes follow the ratios exactly (largest-remainder
    rounding). Stratification is approximate per stratum: each main
    diagnosis group is spread across splits proportionally, capped by the
    remaining global quota. The label registry keeps only short codes
    present in all three splits; tertiles cut the registry into three
    near-equal groups by descending training-split frequency (ties broken
    lexicographically).
    """
    if not notes:
        raise EmptyCorpus("no notes to split")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    n = len(notes)
    targets = _largest_remainder(n, ratios)
    remaining = targets.copy()

    strata: dict[str, list[LabeledNote]] = {}
    for note in notes:
        strata.setdefault(note.labels[0], []).append(note)

    assigned: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    # Large strata first so proportional quotas are meaningful; singletons
    # at the end soak up whatever global capacity is left.
    ordered_strata = sorted(strata.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    for key, members in ordered_strata:
        members = sorted(members, key=lambda m: m.note_id)
        rng = _rng_for(seed, "strata", key)
        rng.shuffle(members)
        m = len(members)
        quota = _largest_remainder(m, ratios)
        quota = [min(q, r) for q, r in zip(quota, remaining)]
        leftover = m - sum(quota)
        while leftover > 0:
            # most spare global capacity first
            i = max(range(3), key=lambda j: (remaining[j] - quota[j], -j))
            quota[i] += 1
            leftover -= 1
        pos = 0
        for split_name, q in zip(SPLIT_NAMES, quota):
            for member in members[pos : pos + q]:
                assigned[split_name].append(member.note_id)
            pos += q
        remaining = [r - q for r, q in zip(remaining, quota)]

    by_id = {note.note_id: note for note in notes}
    split_ids = {name: tuple(sorted(assigned[name])) for name in SPLIT_NAMES}

    counts_per_split: dict[str, Counter] = {}
    for name in SPLIT_NAMES:
        counter: Counter = Counter()
        for note_id in split_ids[name]:
            counter.update(by_id[note_id].labels)
        counts_per_split[name] = counter

    registry = frozenset(
        code
        for code in counts_per_split["train"]
        if counts_per_split["val"][code] > 0 and counts_per_split["test"][code] > 0
    )

    tertiles, thresholds = _cut_tertiles(registry, counts_per_split["train"])
    return DatasetSplit(
        train_ids=split_ids["train"],
        val_ids=split_ids["val"],
        test_ids=split_ids["test"],
        label_registry=registry,
        tertiles=tertiles,
        tertile_thresholds=thresholds,
        seed=seed,
    )


def _cut_tertiles(registry: frozenset[str], train_counts: Counter) -> tuple[dict[str, str], tuple[int, int]]:
    codes = sorted(registry, key=lambda c: (-train_counts[c], c))
    n = len(codes)
    base, extra = divmod(n, 3)
    sizes = [base + (1 if i < extra else 0) for i in range(3)]
    tertiles: dict[str, str] = {}
    pos = 0
    for name, size in zip(TERTILE_NAMES, sizes):
        for code in codes[pos : pos + size]:
            tertiles[code] = name
        pos += size
    tail_codes = [c for c, t in tertiles.items() if t == "tail"]
    head_codes = [c for c, t in tertiles.items() if t == "head"]
    tail_max = max((train_counts[c] for c in tail_codes), default=0)
    head_min = min((train_counts[c] for c in head_codes), default=0)
    return tertiles, (tail_max, head_min)


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def corpus_stats(
    split: DatasetSplit,
    notes: Sequence[LabeledNote],
    token_counter: Callable[[str], int] = whitespace_tokens,
) -> CorpusStats:
    """One-pass corpus statistics; token counting is pluggable."""
    if not notes:
        raise EmptyCorpus("no notes")
    full_codes: set[str] = set()
    short_codes: set[str] = set()
    total_codes = 0
    total_tokens = 0
    for note in notes:
        full_codes.update(note.full_labels)
        short_codes.update(note.labels)
        total_codes += len(note.labels)
        total_tokens += token_counter(note.note.full_text)
    return CorpusStats(
        n_notes=len(notes),
        n_full_codes=len(full_codes),
        n_short_codes=len(short_codes),
        avg_codes_per_note=total_codes / len(notes),
        avg_tokens_per_note=total_tokens / len(notes),
        tertile_thresholds=split.tertile_thresholds,
        per_split_notes={
            "train": len(split.train_ids),
            "val": len(split.val_ids),
            "test": len(split.test_ids),
        },
    )
