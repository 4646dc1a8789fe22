import base64
import json
import subprocess
import sys


def run_bench(*args) -> subprocess.CompletedProcess:
    """Invoke the benchmark engine CLI the way an operator would."""
    proc = subprocess.run(
        [sys.executable, "-m", "clinibench.cli", *[str(a) for a in args]],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, f"clinibench {args[0]} failed:\n{proc.stdout}\n{proc.stderr}"
    return proc


def write_vocab_file(path, merges=()):
    """Printable-ASCII byte vocabulary in the documented JSONL format."""
    tokens = [bytes([b]) for b in range(0x20, 0x7F)]
    tokens.extend(m.encode("ascii") for m in merges)
    tokens.append(b"</s>")
    eos_id = len(tokens) - 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"eos_id": eos_id, "count": len(tokens)}) + "\n")
        for i, token in enumerate(tokens):
            fh.write(
                json.dumps({"id": i, "bytes": base64.b64encode(token).decode("ascii")}) + "\n"
            )
    return path
