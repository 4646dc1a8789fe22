"""Output schema: the JSON shape every generation must satisfy.

Plain mode is an object with exactly 20 diagnosis strings of 3-70
characters; chain-of-thought mode adds a reasoning string (capped at 1200
characters so the list always fits in the token budget) before the list.
Diagnosis strings draw from printable ASCII minus the quote and backslash,
so no escape handling is needed inside the DFA.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

N_DIAGNOSES = 20
MIN_DIAG_CHARS = 3
MAX_DIAG_CHARS = 70
MAX_REASONING_CHARS = 1200

# printable ASCII + space, minus '"' (0x22) and '\' (0x5C)
SAFE_CHAR = r"[ -!#-\[\]-~]"
_WS = r"[ \t\n\r]*"


class SchemaMode(str, Enum):
    PLAIN = "plain"
    COT = "cot"


def schema_regex(
    mode: SchemaMode = SchemaMode.PLAIN,
    char_class: str = SAFE_CHAR,
    max_reasoning_chars: int = MAX_REASONING_CHARS,
) -> str:
    """Regex accepted by both this package's DFA compiler and `re`.

    The permissible diagnosis character class is configurable; the default
    keeps the DFA small and covers every ICD description."""
    diag = f'"{char_class}{{{MIN_DIAG_CHARS},{MAX_DIAG_CHARS}}}"'
    items = f"{diag}({_WS},{_WS}{diag}){{{N_DIAGNOSES - 1}}}"
    body = f'"diagnoses"{_WS}:{_WS}\\[{_WS}{items}{_WS}\\]'
    if mode is SchemaMode.COT:
        reasoning = f'"reasoning"{_WS}:{_WS}"{char_class}{{0,{max_reasoning_chars}}}"'
        body = f"{reasoning}{_WS},{_WS}{body}"
    return f"\\{{{_WS}{body}{_WS}\\}}"


@dataclass
class GenerationRecord:
    """Parsed model output plus generation diagnostics."""

    raw: str
    descriptions: list[str]
    reasoning: str | None
    valid_json: bool
    note_id: str | None = None
    token_count: int | None = None
    wall_time_s: float | None = None

    @property
    def diagnosis_count(self) -> int:
        return len(self.descriptions)

    def to_obj(self) -> dict:
        return {
            "note_id": self.note_id,
            "raw": self.raw,
            "descriptions": self.descriptions,
            "reasoning": self.reasoning,
            "valid_json": self.valid_json,
            "token_count": self.token_count,
            "wall_time_s": self.wall_time_s,
        }


def parse_output(
    raw: str,
    mode: SchemaMode = SchemaMode.PLAIN,
    note_id: str | None = None,
) -> GenerationRecord:
    """Diagnostic parse: never raises. valid_json is true only when the raw
    text is JSON matching the schema shape exactly (key set, 20 strings,
    length bounds). Descriptions are still extracted from any parseable
    object carrying a diagnoses array, so off-schema outputs can be scored
    and their actual diagnosis counts recorded."""
    descriptions: list[str] = []
    reasoning: str | None = None
    valid = False
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, RecursionError):
        obj = None
    if isinstance(obj, dict):
        diagnoses = obj.get("diagnoses")
        if isinstance(diagnoses, list):
            descriptions = [d for d in diagnoses if isinstance(d, str)]
        if isinstance(obj.get("reasoning"), str):
            reasoning = obj["reasoning"]
        expected_keys = {"diagnoses"} if mode is SchemaMode.PLAIN else {"reasoning", "diagnoses"}
        valid = (
            set(obj.keys()) == expected_keys
            and isinstance(diagnoses, list)
            and len(diagnoses) == N_DIAGNOSES
            and len(descriptions) == len(diagnoses)
            and all(MIN_DIAG_CHARS <= len(d) <= MAX_DIAG_CHARS for d in descriptions)
            and (mode is SchemaMode.PLAIN or (reasoning is not None and len(reasoning) <= MAX_REASONING_CHARS))
        )
    return GenerationRecord(
        raw=raw,
        descriptions=descriptions,
        reasoning=reasoning,
        valid_json=valid,
        note_id=note_id,
    )
