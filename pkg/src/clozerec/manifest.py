"""Run manifests: a JSON record of what a command ran with (config
snapshot, input digests, seed), what it produced, and how long it took, so
any run can be checked and reproduced."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    seed: int | None = None
    inputs: dict = field(default_factory=dict)    # path -> sha256
    outputs: dict = field(default_factory=dict)   # name -> path
    counts: dict = field(default_factory=dict)
    elapsed_seconds: float | None = None
    created_utc: str = ""
    _started: float = field(default_factory=time.monotonic, repr=False)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, name: str, path, count: int | None = None) -> None:
        self.outputs[name] = str(path)
        if count is not None:
            self.counts[name] = count

    def finish(self) -> None:
        self.elapsed_seconds = time.monotonic() - self._started
        self.created_utc = datetime.now(timezone.utc).isoformat()

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "counts": self.counts,
            "elapsed_seconds": self.elapsed_seconds,
            "created_utc": self.created_utc,
        }

    def write(self, path) -> None:
        if self.elapsed_seconds is None:
            self.finish()
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
