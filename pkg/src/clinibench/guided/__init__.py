"""Constrained decoding: schema regex -> byte DFA -> token mask automaton."""

from .automaton import (
    FINISHED,
    DecodeResult,
    Finished,
    GenerationBudget,
    MaskAutomaton,
    Vocabulary,
    automaton_fingerprint,
    compile,
    decode,
    file_sha256,
    load_automaton,
    save_automaton,
    step,
)
from .regex import CharDfa, compile_regex
from .schema import (
    MAX_DIAG_CHARS,
    MAX_REASONING_CHARS,
    MIN_DIAG_CHARS,
    N_DIAGNOSES,
    SAFE_CHAR,
    GenerationRecord,
    SchemaMode,
    parse_output,
    schema_regex,
)

__all__ = [
    "CharDfa",
    "DecodeResult",
    "FINISHED",
    "Finished",
    "GenerationBudget",
    "GenerationRecord",
    "MaskAutomaton",
    "MAX_DIAG_CHARS",
    "MAX_REASONING_CHARS",
    "MIN_DIAG_CHARS",
    "N_DIAGNOSES",
    "SAFE_CHAR",
    "SchemaMode",
    "Vocabulary",
    "automaton_fingerprint",
    "compile",
    "compile_regex",
    "decode",
    "file_sha256",
    "load_automaton",
    "parse_output",
    "save_automaton",
    "schema_regex",
    "step",
]
