"""Client for the step-wise logits protocol, plus replay of saved outputs.

The remote side exposes POST /open ({"prompt"} -> {"session_id",
"vocab_hash"}) and POST /step (session_id, prompt on the first step,
token_ids so far -> {"logits": [...]}). Raw logits are required because
token masks are applied locally; the reported vocab_hash must match the
SHA-256 of the vocabulary file the automaton was compiled for.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import requests

from .errors import (
    DecodeDeadEnd,
    MalformedRecord,
    NoAllowedToken,
    ProtocolError,
    TransportError,
)
from .guided import (
    GenerationBudget,
    GenerationRecord,
    MaskAutomaton,
    SchemaMode,
    Vocabulary,
    decode,
    parse_output,
)

MAX_RETRIES = 3
STEP_TIMEOUT_S = 30.0


@dataclass
class ClientConfig:
    timeout_s: float = STEP_TIMEOUT_S
    retries: int = MAX_RETRIES
    backoff_s: float = 0.5
    concurrency: int = 1


def _post(url: str, payload: dict, cfg: ClientConfig) -> dict:
    last_exc: Exception | None = None
    for attempt in range(cfg.retries):
        try:
            resp = requests.post(url, json=payload, timeout=cfg.timeout_s)
        except requests.RequestException as exc:
            last_exc = exc
            if attempt + 1 < cfg.retries:
                time.sleep(cfg.backoff_s * (2**attempt))
            continue
        if resp.status_code != 200:
            raise ProtocolError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{url} returned non-JSON body") from exc
    raise TransportError(f"{url} unreachable after {cfg.retries} attempts: {last_exc}")


class StepSession:
    """One decoding session against a step endpoint."""

    def __init__(self, endpoint: str, prompt: str, cfg: ClientConfig):
        self.endpoint = endpoint.rstrip("/")
        self.prompt = prompt
        self.cfg = cfg
        opened = _post(f"{self.endpoint}/open", {"prompt": prompt}, cfg)
        try:
            self.session_id = str(opened["session_id"])
            self.vocab_hash = str(opened["vocab_hash"])
        except KeyError as exc:
            raise ProtocolError(f"/open response missing {exc}") from exc
        self._first = True

    def logits(self, token_ids: Sequence[int], n_tokens: int) -> np.ndarray:
        payload = {"session_id": self.session_id, "token_ids": list(token_ids)}
        if self._first:
            payload["prompt"] = self.prompt
            self._first = False
        resp = _post(f"{self.endpoint}/step", payload, self.cfg)
        logits = resp.get("logits")
        if not isinstance(logits, list) or len(logits) != n_tokens:
            raise ProtocolError(
                f"/step returned {type(logits).__name__} of length "
                f"{len(logits) if isinstance(logits, list) else 'n/a'}, expected {n_tokens}"
            )
        arr = np.asarray(logits, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ProtocolError("/step returned non-finite logits")
        return arr


def generate(
    endpoint: str,
    prompt: str,
    automaton: MaskAutomaton,
    vocab: Vocabulary,
    budget: GenerationBudget = GenerationBudget(),
    mode: SchemaMode = SchemaMode.PLAIN,
    cfg: ClientConfig | None = None,
    vocab_hash: str | None = None,
    note_id: str | None = None,
) -> GenerationRecord:
    """Run one guided generation against the endpoint."""
    cfg = cfg or ClientConfig()
    session = StepSession(endpoint, prompt, cfg)
    if vocab_hash is not None and session.vocab_hash != vocab_hash:
        raise ProtocolError(
            f"endpoint vocabulary hash {session.vocab_hash[:12]}... does not match "
            f"local vocabulary {vocab_hash[:12]}..."
        )
    try:
        result = decode(
            automaton,
            vocab,
            lambda ids: session.logits(ids, automaton.n_tokens),
            budget,
        )
    except NoAllowedToken as exc:
        raise DecodeDeadEnd(str(exc)) from exc
    record = parse_output(result.data.decode("utf-8", errors="replace"), mode, note_id=note_id)
    record.token_count = len(result.token_ids)
    record.wall_time_s = result.wall_time_s
    return record


def generate_many(
    endpoint: str,
    prompts: Sequence[tuple[str, str]],  # (note_id, prompt)
    automaton: MaskAutomaton,
    vocab: Vocabulary,
    budget: GenerationBudget = GenerationBudget(),
    mode: SchemaMode = SchemaMode.PLAIN,
    cfg: ClientConfig | None = None,
    vocab_hash: str | None = None,
) -> list[GenerationRecord]:
    """Independent sessions, bounded parallelism, results in input order."""
    cfg = cfg or ClientConfig()

    def run(item: tuple[str, str]) -> GenerationRecord:
        note_id, prompt = item
        return generate(
            endpoint, prompt, automaton, vocab, budget, mode, cfg, vocab_hash, note_id
        )

    if cfg.concurrency <= 1:
        return [run(item) for item in prompts]
    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        return list(pool.map(run, prompts))


def replay(path, mode: SchemaMode = SchemaMode.PLAIN) -> Iterator[GenerationRecord]:
    """Parse pre-generated raw outputs from JSONL {"note_id", "raw"} records."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                note_id, raw = str(obj["note_id"]), str(obj["raw"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecord(f"bad replay record: {exc}", line_no) from exc
            yield parse_output(raw, mode, note_id=note_id)


def write_records(path, records: Iterable[GenerationRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_obj(), separators=(",", ":")) + "\n")


def read_records(path) -> list[GenerationRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                GenerationRecord(
                    raw=obj["raw"],
                    descriptions=list(obj.get("descriptions", [])),
                    reasoning=obj.get("reasoning"),
                    valid_json=bool(obj.get("valid_json", False)),
                    note_id=obj.get("note_id"),
                    token_count=obj.get("token_count"),
                    wall_time_s=obj.get("wall_time_s"),
                )
            )
    return out
