"""Token-level mask automaton over a byte DFA.

compile() lifts a character DFA to the tokenizer vocabulary: a token is
allowed in a state iff consuming its bytes stays within live DFA states.
Because dead states are pruned, every allowed token keeps the output
completable, which gives the soundness guarantee, and every tokenization
of an accepted string stays allowed, which gives completeness.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    BudgetExhaustedInvalid,
    MalformedRecord,
    NoAllowedToken,
    VocabCoverageError,
)
from .regex import CharDfa, compile_regex

MAGIC = b"CBFA1"


@dataclass(frozen=True)
class GenerationBudget:
    max_tokens: int = 1500
    temperature: float = 0.0  # greedy


class Finished:
    """Sentinel returned by step() when generation ends."""

    def __repr__(self):
        return "Finished"


FINISHED = Finished()


class Vocabulary:
    """Dense token-id -> byte-string table with a designated EOS id."""

    def __init__(self, tokens: list[bytes], eos_id: int):
        if not tokens:
            raise ValueError("empty vocabulary")
        if not 0 <= eos_id < len(tokens):
            raise ValueError(f"eos_id {eos_id} outside vocabulary of size {len(tokens)}")
        self.tokens = list(tokens)
        self.eos_id = eos_id

    def __len__(self) -> int:
        return len(self.tokens)

    def decode(self, ids) -> bytes:
        return b"".join(self.tokens[i] for i in ids)

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        eos_id = None
        entries: dict[int, bytes] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "eos_id" in obj:
                    eos_id = int(obj["eos_id"])
                    continue
                try:
                    entries[int(obj["id"])] = base64.b64decode(obj["bytes"])
                except (KeyError, ValueError) as exc:
                    raise MalformedRecord(f"bad vocabulary entry: {exc}", line_no) from exc
        if eos_id is None:
            raise MalformedRecord("vocabulary file lacks an eos_id header line")
        if sorted(entries) != list(range(len(entries))):
            raise MalformedRecord("vocabulary ids are not dense in [0, |V|)")
        return cls([entries[i] for i in range(len(entries))], eos_id)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"eos_id": self.eos_id, "count": len(self.tokens)}) + "\n")
            for i, tok in enumerate(self.tokens):
                fh.write(
                    json.dumps({"id": i, "bytes": base64.b64encode(tok).decode("ascii")}) + "\n"
                )


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class MaskAutomaton:
    """Per-state allowed-token sets over a compiled schema DFA."""

    start: int
    accepting: frozenset[int]
    token_edges: list[dict[int, int]]  # state -> {token_id: next_state}
    n_tokens: int
    eos_id: int
    char_dfa: CharDfa | None = None
    allowed_ids: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.allowed_ids:
            self.allowed_ids = [
                np.array(sorted(edges), dtype=np.int64) for edges in self.token_edges
            ]

    @property
    def n_states(self) -> int:
        return len(self.token_edges)

    def mask_bits(self, state: int) -> np.ndarray:
        """Allowed-token bitset for a state as little-endian u64 words.

        Includes the EOS bit iff the state is accepting."""
        n_words = (self.n_tokens + 63) // 64
        words = np.zeros(n_words, dtype=np.uint64)
        ids = list(self.allowed_ids[state])
        if state in self.accepting:
            ids.append(self.eos_id)
        for token_id in ids:
            words[token_id // 64] |= np.uint64(1) << np.uint64(token_id % 64)
        return words


def compile(regex: str, vocab: Vocabulary) -> MaskAutomaton:  # noqa: A001
    """Compile a schema regex into a token mask automaton for `vocab`."""
    dfa = compile_regex(regex)
    n_states = dfa.n_states
    trans = np.full((n_states, max(dfa.n_classes, 1)), -1, dtype=np.int64)
    for s, row in enumerate(dfa.trans):
        for c, target in enumerate(row):
            trans[s, c] = target
    class_of_byte = np.array(dfa.class_of_byte, dtype=np.int64)

    token_edges: list[dict[int, int]] = [{} for _ in range(n_states)]
    all_states = np.arange(n_states, dtype=np.int64)
    for token_id, token in enumerate(vocab.tokens):
        if token_id == vocab.eos_id or not token:
            continue
        ends = all_states
        for byte in token:
            cls = class_of_byte[byte]
            if cls < 0:
                ends = None
                break
            clipped = np.where(ends >= 0, ends, 0)
            ends = np.where(ends >= 0, trans[clipped, cls], -1)
        if ends is None:
            continue
        for state in np.nonzero(ends >= 0)[0]:
            token_edges[int(state)][token_id] = int(ends[state])

    automaton = MaskAutomaton(
        start=dfa.start,
        accepting=dfa.accepting,
        token_edges=token_edges,
        n_tokens=len(vocab),
        eos_id=vocab.eos_id,
        char_dfa=dfa,
    )
    _check_coverage(automaton)
    return automaton


def _check_coverage(automaton: MaskAutomaton) -> None:
    """Every token-reachable state must allow a continuation or be accepting."""
    seen = {automaton.start}
    stack = [automaton.start]
    while stack:
        state = stack.pop()
        edges = automaton.token_edges[state]
        if not edges and state not in automaton.accepting:
            raise VocabCoverageError(
                f"state {state} is a dead end: the vocabulary cannot spell any continuation"
            )
        for target in edges.values():
            if target not in seen:
                seen.add(target)
                stack.append(target)


def step(automaton: MaskAutomaton, state: int, logits: np.ndarray):
    """Greedy masked decoding step: argmax over the state's allowed tokens.

    EOS competes only in accepting states. Returns (token_id, next_state)
    or FINISHED when EOS wins. Ties break toward the lowest token id.
    """
    logits = np.asarray(logits)
    if logits.shape != (automaton.n_tokens,):
        raise ValueError(f"logits shape {logits.shape}, expected ({automaton.n_tokens},)")
    allowed = automaton.allowed_ids[state]
    accepting = state in automaton.accepting
    if allowed.size == 0 and not accepting:
        raise NoAllowedToken(f"no token allowed in state {state}")
    candidates = np.append(allowed, automaton.eos_id) if accepting else allowed
    best = int(candidates[int(np.argmax(logits[candidates]))])
    if accepting and best == automaton.eos_id:
        return FINISHED
    return best, automaton.token_edges[state][best]


@dataclass
class DecodeResult:
    token_ids: list[int]
    data: bytes
    finish_reason: str  # "eos" | "budget"
    wall_time_s: float


def decode(
    automaton: MaskAutomaton,
    vocab: Vocabulary,
    logits_fn,
    budget: GenerationBudget = GenerationBudget(),
) -> DecodeResult:
    """Run greedy masked decoding with `logits_fn(token_ids) -> logits`.

    Stops at EOS, or at the token budget if the automaton is in an
    accepting state; otherwise raises BudgetExhaustedInvalid.
    """
    t0 = time.monotonic()
    state = automaton.start
    token_ids: list[int] = []
    while True:
        if len(token_ids) >= budget.max_tokens:
            if state in automaton.accepting:
                reason = "budget"
                break
            raise BudgetExhaustedInvalid(
                f"budget of {budget.max_tokens} tokens exhausted outside an accepting state"
            )
        result = step(automaton, state, logits_fn(token_ids))
        if result is FINISHED:
            reason = "eos"
            break
        token_id, state = result
        token_ids.append(token_id)
    return DecodeResult(
        token_ids=token_ids,
        data=vocab.decode(token_ids),
        finish_reason=reason,
        wall_time_s=time.monotonic() - t0,
    )


def save_automaton(path, automaton: MaskAutomaton, fingerprint: str = "") -> None:
    """Versioned binary cache: magic, state count, transitions, then plain
    u64-word little-endian mask bitsets per state."""
    fp = fingerprint.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", automaton.n_states, automaton.n_tokens,
                             automaton.eos_id, automaton.start))
        accepting = sorted(automaton.accepting)
        fh.write(struct.pack("<I", len(accepting)))
        fh.write(struct.pack(f"<{len(accepting)}I", *accepting) if accepting else b"")
        for edges in automaton.token_edges:
            fh.write(struct.pack("<I", len(edges)))
            for token_id in sorted(edges):
                fh.write(struct.pack("<II", token_id, edges[token_id]))
        for state in range(automaton.n_states):
            words = automaton.mask_bits(state)
            fh.write(words.astype("<u8").tobytes())
        fh.write(struct.pack("<I", len(fp)))
        fh.write(fp)


def load_automaton(path, expected_fingerprint: str | None = None) -> MaskAutomaton:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise MalformedRecord(f"{path} is not an automaton cache (bad magic)")
        n_states, n_tokens, eos_id, start = struct.unpack("<IIII", fh.read(16))
        (n_accepting,) = struct.unpack("<I", fh.read(4))
        accepting = frozenset(struct.unpack(f"<{n_accepting}I", fh.read(4 * n_accepting)))
        token_edges: list[dict[int, int]] = []
        for _ in range(n_states):
            (n_edges,) = struct.unpack("<I", fh.read(4))
            edges = {}
            for _ in range(n_edges):
                token_id, target = struct.unpack("<II", fh.read(8))
                edges[token_id] = target
            token_edges.append(edges)
        n_words = (n_tokens + 63) // 64
        masks = np.frombuffer(fh.read(8 * n_words * n_states), dtype="<u8")
        masks = masks.reshape(n_states, n_words)
        (fp_len,) = struct.unpack("<I", fh.read(4))
        fingerprint = fh.read(fp_len).decode("utf-8")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise MalformedRecord(
            f"automaton cache {path} was built for a different regex/vocabulary"
        )
    automaton = MaskAutomaton(
        start=start,
        accepting=accepting,
        token_edges=token_edges,
        n_tokens=n_tokens,
        eos_id=eos_id,
    )
    # consistency check between stored masks and edge-derived masks
    for state in range(n_states):
        if not np.array_equal(automaton.mask_bits(state), masks[state]):
            raise MalformedRecord(f"automaton cache {path} is corrupt at state {state}")
    return automaton


def automaton_fingerprint(regex: str, vocab_hash: str) -> str:
    return hashlib.sha256(f"{regex}\n{vocab_hash}".encode("utf-8")).hexdigest()
