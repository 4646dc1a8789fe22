import numpy as np
import pytest

from clinibench.corpus import AdmissionNote, CodeTable, IcdEntry, LabeledNote
from clinibench.guided import Vocabulary


def make_note(note_id: str, text: str, labels, full_labels=None, version=10, module="hosp"):
    note = AdmissionNote(note_id=note_id, sections=(("History of Present Illness", text),))
    return LabeledNote(
        note=note,
        labels=tuple(labels),
        full_labels=tuple(full_labels or labels),
        module=module,
        version=version,
    )


@pytest.fixture
def code_table() -> CodeTable:
    entries = [
        IcdEntry("I10", 10, "Essential hypertension", "Essential (primary) hypertension"),
        IcdEntry("I95.9", 10, "Hypotension", "Hypotension, unspecified"),
        IcdEntry("J18.9", 10, "Pneumonia", "Pneumonia, unspecified organism"),
        IcdEntry("E11.9", 10, "Type 2 diabetes", "Type 2 diabetes mellitus without complications"),
        IcdEntry("N17.9", 10, "Acute kidney failure", "Acute kidney failure, unspecified"),
        IcdEntry("I50.9", 10, "Heart failure", "Heart failure,  unspecified"),
        IcdEntry("4019", 9, "Hypertension NOS", "Unspecified essential hypertension"),
        IcdEntry("K52.9", 10, "Gastroenteritis", "Noninfective gastroenteritis and colitis"),
    ]
    return CodeTable(entries)


def byte_vocab(extra_tokens=(), eos=b"</s>", include_space=True) -> Vocabulary:
    """Printable-ASCII byte-level vocabulary plus optional merges."""
    lo = 0x20 if include_space else 0x21
    tokens = [bytes([b]) for b in range(lo, 0x7F)]
    tokens.extend(bytes(t, "ascii") if isinstance(t, str) else t for t in extra_tokens)
    tokens.append(eos)
    return Vocabulary(tokens, eos_id=len(tokens) - 1)


def scripted_logits(vocab: Vocabulary, target: bytes):
    """Logits function that spells `target` by greedy longest-prefix
    tokenization, then EOS."""

    def fn(token_ids):
        generated = vocab.decode(token_ids)
        assert target.startswith(generated), (target, generated)
        remaining = target[len(generated):]
        logits = np.full(len(vocab), -10.0)
        if not remaining:
            logits[vocab.eos_id] = 10.0
            return logits
        best = None
        for token_id, token in enumerate(vocab.tokens):
            if token_id == vocab.eos_id or not token:
                continue
            if remaining.startswith(token):
                if best is None or len(token) > len(vocab.tokens[best]):
                    best = token_id
        assert best is not None, f"vocabulary cannot spell {remaining[:20]!r}"
        logits[best] = 10.0
        return logits

    return fn


def plain_json_target(descriptions) -> str:
    import json

    return json.dumps({"diagnoses": list(descriptions)}, separators=(",", ":"))


def brute_force_masks(dfa, vocab: Vocabulary):
    """Oracle: per state, test every token by byte-walking the char DFA."""
    masks = []
    for state in range(dfa.n_states):
        allowed = {}
        for token_id, token in enumerate(vocab.tokens):
            if token_id == vocab.eos_id or not token:
                continue
            end = dfa.walk(state, token)
            if end >= 0:
                allowed[token_id] = end
        masks.append(allowed)
    return masks


def random_pattern(rng, alphabet: str) -> str:
    """Random small regex over `alphabet` using the supported syntax."""

    def atom():
        roll = rng.random()
        if roll < 0.5:
            return alphabet[int(rng.integers(0, len(alphabet)))]
        if roll < 0.7:
            chars = sorted({alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=2)})
            return "[" + "".join(chars) + "]"
        return "(" + seq(depth=1) + ")"

    def piece(depth):
        text = atom() if depth else seq(1)
        roll = rng.random()
        if roll < 0.2:
            return text + "*"
        if roll < 0.3:
            return text + "?"
        if roll < 0.4:
            lo = int(rng.integers(0, 3))
            hi = lo + int(rng.integers(0, 3))
            return text + f"{{{lo},{hi}}}"
        return text

    def seq(depth=0):
        parts = [piece(depth) for _ in range(int(rng.integers(1, 4)))]
        if rng.random() < 0.3:
            return "|".join(["".join(parts), piece(1)])
        return "".join(parts)

    return seq()


def random_toy_vocab(rng, alphabet: str) -> Vocabulary:
    tokens = [c.encode() for c in alphabet]
    for _ in range(int(rng.integers(2, 8))):
        length = int(rng.integers(2, 5))
        tokens.append(
            "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=length)).encode()
        )
    tokens = list(dict.fromkeys(tokens))
    tokens.append(b"</s>")
    return Vocabulary(tokens, eos_id=len(tokens) - 1)
