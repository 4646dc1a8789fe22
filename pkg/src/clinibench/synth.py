"""Synthetic corpus generator.

Produces a code table and labeled admission notes in the exact ingest
schema, with note text built from the description words of the note's own
labels plus filler. Text and labels therefore correlate: term retrieval
finds label-similar neighbors, which the retrieval benchmarks rely on.
Everything is derived from one seed and is byte-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import CodeTable, IcdEntry

_ADJECTIVES = (
    "acute chronic recurrent severe mild diffuse focal persistent transient "
    "progressive unstable latent benign malignant obstructive congestive "
    "ischemic hemorrhagic septic febrile atypical refractory primary secondary "
    "bilateral unilateral proximal distal degenerative inflammatory metabolic "
    "congenital idiopathic postoperative traumatic viral bacterial fungal "
    "allergic autoimmune vascular"
).split()

_SITES = (
    "renal hepatic cardiac pulmonary gastric cerebral spinal femoral biliary "
    "pancreatic thyroid adrenal ocular dermal pleural bronchial aortic venous "
    "arterial lymphatic muscular skeletal cranial lumbar thoracic cervical "
    "abdominal pelvic duodenal colonic esophageal tracheal nasal hepatobiliary "
    "urinary bladder prostatic ovarian uterine testicular splenic tonsillar "
    "sinus retinal corneal gingival mandibular radial ulnar"
).split()

_CONDITIONS = (
    "stenosis insufficiency obstruction inflammation degeneration infection "
    "hypertrophy atrophy fibrosis necrosis edema effusion embolism thrombosis "
    "hemorrhage ulceration perforation dilation prolapse herniation neoplasm "
    "dysplasia sclerosis spasm rupture fracture dislocation contusion "
    "laceration abscess cyst calculus dysfunction failure arrhythmia"
).split()

_QUALIFIERS = ("unspecified", "with complications", "initial episode", "late effect", "recurrent episode")

_FILLER = (
    "patient reports denies onset days ago stable vitals afebrile alert "
    "oriented history notable exam unremarkable tolerating oral intake "
    "ambulating without assistance followup arranged no distress baseline "
    "reviewed medications continued admitted for evaluation monitoring"
).split()

_ALLERGIES = ("No Known Allergies", "Penicillins", "Sulfa", "Latex", "Codeine", "Shellfish")


@dataclass
class SynthConfig:
    n_notes: int = 300
    n_codes: int = 50
    seed: int = 0
    version: int = 10
    module: str = "hosp"
    zipf_exponent: float = 0.9
    mean_codes_per_note: float = 5.0
    noise_words: int = 25
    mention_prob: float = 0.65


def _make_categories(rng: np.random.Generator, n: int, version: int) -> list[str]:
    if version == 10:
        pool = [f"{chr(ord('A') + a)}{d:02d}" for a in range(26) for d in range(100)]
    else:
        pool = [f"{d:03d}" for d in range(1, 1000)]
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in sorted(idx)]


def _make_descriptions(rng: np.random.Generator, n: int) -> list[str]:
    combos = [
        (a, s, c)
        for a in range(len(_ADJECTIVES))
        for s in range(len(_SITES))
        for c in range(len(_CONDITIONS))
    ]
    idx = rng.choice(len(combos), size=n, replace=False)
    out = []
    for i in idx:
        a, s, c = combos[i]
        out.append(f"{_ADJECTIVES[a]} {_SITES[s]} {_CONDITIONS[c]}")
    return out


def generate_code_table(cfg: SynthConfig, rng: np.random.Generator) -> tuple[CodeTable, dict[str, str]]:
    """Synthesize a code table; returns it plus short_code -> base description."""
    categories = _make_categories(rng, cfg.n_codes, cfg.version)
    bases = _make_descriptions(rng, cfg.n_codes)
    entries = []
    base_by_short: dict[str, str] = {}
    for cat, base in zip(categories, bases):
        base_by_short[cat] = base
        n_full = int(rng.integers(1, 3))
        for j in range(n_full):
            if cfg.version == 10:
                full = f"{cat}.{j}" if n_full > 1 or rng.random() < 0.5 else cat
            else:
                full = f"{cat}{j}" if n_full > 1 or rng.random() < 0.5 else cat
            qualifier = _QUALIFIERS[int(rng.integers(0, len(_QUALIFIERS)))]
            short_desc = base if j == 0 else f"{base} {_QUALIFIERS[j % len(_QUALIFIERS)].split()[0]}"
            entries.append(
                IcdEntry(
                    full_code=full,
                    version=cfg.version,
                    short_desc=short_desc,
                    long_desc=f"{base}, {qualifier}",
                )
            )
    return CodeTable(entries), base_by_short


def _zipf_weights(n: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=np.float64)
    w = ranks**-exponent
    return w / w.sum()


def generate_notes(
    cfg: SynthConfig,
    table: CodeTable,
    base_by_short: dict[str, str],
    rng: np.random.Generator,
) -> list[dict]:
    """Note records in the ingest JSONL schema (labels are full codes)."""
    shorts = sorted(base_by_short)
    weights = _zipf_weights(len(shorts), cfg.zipf_exponent)
    full_by_short = {s: [e.full_code for e in table.entries_for_short(s)] for s in shorts}

    records = []
    for i in range(cfg.n_notes):
        n_labels = 1 + int(rng.poisson(cfg.mean_codes_per_note - 1))
        n_labels = min(n_labels, len(shorts))
        picked = rng.choice(len(shorts), size=n_labels, replace=False, p=weights)
        label_shorts = [shorts[j] for j in picked]
        labels = [
            full_by_short[s][int(rng.integers(0, len(full_by_short[s])))] for s in label_shorts
        ]
        main_base = base_by_short[label_shorts[0]]
        # secondary diagnoses surface in the text only most of the time, so
        # term retrieval is informative but strictly weaker than gold labels
        other_bases = [
            base_by_short[s] for s in label_shorts[1:] if rng.random() < cfg.mention_prob
        ]
        noise = " ".join(
            _FILLER[int(k)] for k in rng.integers(0, len(_FILLER), size=cfg.noise_words)
        )
        sections = {
            "Chief Complaint": main_base,
            "History of Present Illness": (
                f"Patient presents with {main_base}. Symptoms consistent with {main_base}. {noise}"
            ),
            "Past Medical History": "; ".join(other_bases) if other_bases else "none",
            "Allergies": _ALLERGIES[int(rng.integers(0, len(_ALLERGIES)))],
            "Physical Exam at Admission": " ".join(
                _FILLER[int(k)] for k in rng.integers(0, len(_FILLER), size=12)
            ),
        }
        records.append(
            {
                "note_id": f"note-{i:05d}",
                "sections": sections,
                "labels": labels,
                "module": cfg.module,
                "icd_version": cfg.version,
            }
        )
    return records


def generate(cfg: SynthConfig) -> tuple[CodeTable, list[dict]]:
    rng = np.random.default_rng(cfg.seed)
    table, base_by_short = generate_code_table(cfg, rng)
    records = generate_notes(cfg, table, base_by_short, rng)
    return table, records


def write_corpus(cfg: SynthConfig, notes_path, codes_path) -> None:
    table, records = generate(cfg)
    table.to_csv(codes_path)
    with open(notes_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
