"""Run manifests: every output directory records what produced it.

A manifest carries the resolved-configuration hash, SHA-256 digests of all
input files and all written outputs, the seed and the subcommand, so a
rerun can be checked for byte-identical results by comparing digests.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ManifestWriter:
    def __init__(self, subcommand: str, outdir, config: dict, seed: int | None = None):
        self.subcommand = subcommand
        self.outdir = Path(outdir)
        self.config = config
        self.seed = seed
        self.started_at = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}

    def add_input(self, path) -> None:
        self.inputs[Path(path).name] = sha256_file(path)

    def add_output(self, path) -> None:
        self.outputs[str(Path(path).relative_to(self.outdir))] = sha256_file(path)

    def write(self) -> Path:
        self.outdir.mkdir(parents=True, exist_ok=True)
        payload = {
            "tool": "clinibench",
            "version": __version__,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config_hash": config_hash(self.config),
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_at": self.started_at,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        path = self.outdir / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


def read_manifest(outdir) -> dict:
    with open(Path(outdir) / MANIFEST_NAME, encoding="utf-8") as fh:
        return json.load(fh)
