"""Mock step-inference HTTP server.

Implements the wire protocol the benchmark's guided-decoding client
speaks: POST /open with {"prompt"} returns {"session_id", "vocab_hash"};
POST /step with {"session_id", "token_ids", optional "prompt"} returns
{"logits": [...]} over the full vocabulary.

Policies: "uniform" emits seeded random logits (exercises mask soundness);
"scripted" emits logits that deterministically spell a per-prompt target
string via greedy longest-prefix tokenization, then EOS. Targets are keyed
by the SHA-256 hex of the prompt, with an optional "default" entry.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np


class PortInUse(Exception):
    pass


def load_vocab_file(path) -> tuple[list[bytes], int, str]:
    """Tokens, eos id, and SHA-256 of the file, per the shared format."""
    eos_id = None
    entries: dict[int, bytes] = {}
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        raw = fh.read()
    digest.update(raw)
    for line in raw.decode("utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if "eos_id" in obj:
            eos_id = int(obj["eos_id"])
            continue
        entries[int(obj["id"])] = base64.b64decode(obj["bytes"])
    if eos_id is None or sorted(entries) != list(range(len(entries))):
        raise ValueError(f"{path} is not a valid vocabulary file")
    return [entries[i] for i in range(len(entries))], eos_id, digest.hexdigest()


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockModel:
    """Session state and logits policies; stateless beyond prompt-per-session."""

    def __init__(self, tokens, eos_id, vocab_hash, policy="uniform", targets=None, seed=0):
        if policy not in ("uniform", "scripted"):
            raise ValueError(f"unknown policy {policy!r}")
        self.tokens = tokens
        self.eos_id = eos_id
        self.vocab_hash = vocab_hash
        self.policy = policy
        self.targets = dict(targets or {})
        self.seed = seed
        self._sessions: dict[str, dict] = {}
        self._lock = threading.Lock()

    def open_session(self, prompt: str) -> str:
        with self._lock:
            session_id = f"s{len(self._sessions):06d}"
            session = {"prompt": prompt}
            if self.policy == "scripted":
                target = self.targets.get(prompt_key(prompt), self.targets.get("default"))
                if target is None:
                    raise ValueError("no scripted target for this prompt and no default")
                session["target"] = target.encode("utf-8")
            self._sessions[session_id] = session
            return session_id

    def logits(self, session_id: str, token_ids) -> list[float]:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        if self.policy == "uniform":
            step_seed = hashlib.sha256(
                f"{self.seed}|{session_id}|{len(token_ids)}".encode()
            ).digest()
            rng = np.random.default_rng(int.from_bytes(step_seed[:8], "little"))
            return rng.random(len(self.tokens)).tolist()
        return self._scripted_logits(session["target"], token_ids)

    def _scripted_logits(self, target: bytes, token_ids) -> list[float]:
        generated = b"".join(self.tokens[i] for i in token_ids)
        if not target.startswith(generated):
            # the client diverged from the script; steer to EOS-only
            generated = target
        remaining = target[len(generated):]
        logits = [-10.0] * len(self.tokens)
        if not remaining:
            logits[self.eos_id] = 10.0
            return logits
        best = None
        for token_id, token in enumerate(self.tokens):
            if token_id == self.eos_id or not token:
                continue
            if remaining.startswith(token):
                if best is None or len(token) > len(self.tokens[best]):
                    best = token_id
        if best is None:
            logits[self.eos_id] = 10.0
        else:
            logits[best] = 10.0
        return logits


class _Handler(BaseHTTPRequestHandler):
    server_version = "clinibench-mock"

    def log_message(self, *args):
        pass

    def _send(self, status: int, body: dict):
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        model: MockModel = self.server.model
        try:
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            self._send(400, {"error": "bad request body"})
            return
        try:
            if self.path == "/open":
                session_id = model.open_session(str(payload.get("prompt", "")))
                self._send(200, {"session_id": session_id, "vocab_hash": model.vocab_hash})
            elif self.path == "/step":
                logits = model.logits(
                    str(payload.get("session_id", "")), payload.get("token_ids", [])
                )
                self._send(200, {"logits": logits})
            else:
                self._send(404, {"error": f"no such endpoint {self.path}"})
        except KeyError as exc:
            self._send(404, {"error": f"unknown session {exc}"})
        except ValueError as exc:
            self._send(400, {"error": str(exc)})


def serve(model: MockModel, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bind and return the server (caller drives serve_forever)."""
    try:
        server = ThreadingHTTPServer((host, port), _Handler)
    except OSError as exc:
        raise PortInUse(f"cannot bind {host}:{port}: {exc}") from exc
    server.model = model
    return server


def start_background(model: MockModel, host: str = "127.0.0.1", port: int = 0):
    """Convenience for tests: returns (server, base_url, thread)."""
    server = serve(model, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{host}:{server.server_address[1]}", thread
