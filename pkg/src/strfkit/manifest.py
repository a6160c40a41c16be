"""Run manifests: enough provenance to reproduce any CLI output."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import __version__

MANIFEST_SCHEMA_VERSION = 1


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    seed: int | None = None

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_of(path)

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "tool": "strfkit",
            "tool_version": __version__,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
