"""Prompt assembly for zero-shot, chain-of-thought and few-shot runs.

Templates are byte-deterministic strings with {note} and (few-shot only)
{few_shots} slots; defaults can be overridden from a TOML or JSON config
keyed by mode. Few-shot demonstrations are serialized as a JSON array in
the same shape the model is asked to emit, so the target format is shown
verbatim.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .errors import DemoCountMismatch

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class PromptMode(str, Enum):
    ZERO_SHOT = "zero_shot"
    ZERO_SHOT_COT = "zero_shot_cot"
    FEW_SHOT = "few_shot"


FEW_SHOT_COUNTS = (1, 3, 5)

_ROLE = "You are a medical professional."
_TASK = "Given an admission note for a patient, present a list of possible diagnoses for the patient."
# Slots are replaced literally, so templates may contain JSON braces.
_FORMAT_PLAIN = (
    'Answer with a JSON object of the form {"diagnoses": ["...", ...]} '
    "containing exactly 20 diagnosis descriptions."
)
_FORMAT_COT = (
    'Answer with a JSON object of the form {"reasoning": "...", "diagnoses": ["...", ...]} '
    "containing your reasoning and exactly 20 diagnosis descriptions."
)

DEFAULT_TEMPLATES = {
    PromptMode.ZERO_SHOT: (
        _ROLE + " " + _TASK + " The admission note is as follows: {note}. " + _FORMAT_PLAIN
    ),
    PromptMode.ZERO_SHOT_COT: (
        _ROLE + " " + _TASK + " The admission note is as follows: {note}. "
        "TASK: Solve this task step by step and give an explanation in maximum one or two "
        "sentences for each diagnosis decision. " + _FORMAT_COT
    ),
    PromptMode.FEW_SHOT: (
        _ROLE + " " + _TASK + " Similar patients look like this: {few_shots}. "
        "The admission note is as follows: {note}. "
        "Give the diagnoses following the schema from the examples."
    ),
}


@dataclass(frozen=True)
class Demonstration:
    """A retrieved neighbor: its note text and annotated diagnosis descriptions."""

    note_text: str
    diagnoses: tuple[str, ...]

    def __post_init__(self):
        if not self.diagnoses:
            raise ValueError("demonstration needs at least one diagnosis description")

    def to_obj(self) -> dict:
        return {"note": self.note_text, "diagnoses": list(self.diagnoses)}


def demos_to_json(demos: Sequence[Demonstration]) -> str:
    return json.dumps([d.to_obj() for d in demos], ensure_ascii=False)


def demos_from_json(text: str) -> list[Demonstration]:
    return [
        Demonstration(note_text=obj["note"], diagnoses=tuple(obj["diagnoses"]))
        for obj in json.loads(text)
    ]


def load_templates(path) -> dict[PromptMode, str]:
    """Merge template overrides from a TOML or JSON file over the defaults."""
    raw = Path(path).read_bytes()
    if str(path).endswith(".json"):
        overrides = json.loads(raw.decode("utf-8"))
    else:
        overrides = tomllib.loads(raw.decode("utf-8"))
    templates = dict(DEFAULT_TEMPLATES)
    for key, value in overrides.items():
        mode = PromptMode(key)
        if "{note}" not in value:
            raise ValueError(f"template for {key} lacks a {{note}} slot")
        if mode is PromptMode.FEW_SHOT and "{few_shots}" not in value:
            raise ValueError("few-shot template lacks a {few_shots} slot")
        templates[mode] = value
    return templates


def assemble(
    mode: PromptMode,
    note_text: str,
    demos: Sequence[Demonstration] = (),
    templates: dict[PromptMode, str] | None = None,
) -> str:
    """Render the prompt for one note. Few-shot requires 1, 3 or 5 demos;
    the other modes require none."""
    templates = templates or DEFAULT_TEMPLATES
    if mode is PromptMode.FEW_SHOT:
        if len(demos) not in FEW_SHOT_COUNTS:
            raise DemoCountMismatch(
                f"few-shot prompts take {FEW_SHOT_COUNTS} demonstrations, got {len(demos)}"
            )
        rendered = templates[mode].replace("{few_shots}", demos_to_json(demos))
        return rendered.replace("{note}", note_text)
    if demos:
        raise DemoCountMismatch(f"{mode.value} prompts take no demonstrations, got {len(demos)}")
    return templates[mode].replace("{note}", note_text)


def demonstration_for(note, code_table) -> Demonstration:
    """Build a demonstration from a labeled note: one description per short
    code, preferring the short description of the annotated full code."""
    descriptions = []
    for full, short in zip(note.full_labels, note.labels):
        entry = None
        for candidate in code_table.entries_for_short(short):
            if candidate.full_code == full and candidate.version == note.version:
                entry = candidate
                break
        if entry is None:
            entries = code_table.entries_for_short(short)
            entry = entries[0]
        descriptions.append(entry.short_desc or entry.long_desc)
    return Demonstration(note_text=note.note.full_text, diagnoses=tuple(descriptions))
