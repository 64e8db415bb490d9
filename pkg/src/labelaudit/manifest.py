"""Reproducibility manifests for CLI runs.

Every command writes a manifest recording the effective configuration, the
seeds in play, SHA-256 digests of all inputs and outputs, the tool
version, and the wall-clock duration. Re-running a command with the same
inputs and configuration must reproduce every output digest; the duration
field is informational and excluded from that contract.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import __version__


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    effective_config: Mapping[str, object]
    seeds: list[int] = field(default_factory=list)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    duration_seconds: float = 0.0

    def to_dict(self) -> dict[str, object]:
        return {
            "command": self.command,
            "effective_config": self.effective_config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tool_version": self.tool_version,
            "duration_seconds": self.duration_seconds,
        }


class ManifestWriter:
    """Collects inputs/outputs during a command run, then writes the manifest."""

    def __init__(self, command: str, effective_config: Mapping[str, object], out_dir: Path):
        self.manifest = RunManifest(command=command, effective_config=dict(effective_config))
        self.out_dir = Path(out_dir)
        self._start = time.monotonic()

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        self.manifest.inputs[str(p)] = sha256_file(p)

    def add_output(self, path: str | Path) -> None:
        p = Path(path)
        self.manifest.outputs[str(p.relative_to(self.out_dir))] = sha256_file(p)

    def add_seeds(self, seeds) -> None:
        self.manifest.seeds.extend(int(s) for s in seeds)

    def write(self) -> Path:
        self.manifest.duration_seconds = round(time.monotonic() - self._start, 3)
        path = self.out_dir / f"{self.manifest.command}.manifest.json"
        path.write_text(
            json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return path


def load_manifest(path: str | Path) -> dict[str, object]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def verify_manifest_outputs(path: str | Path) -> list[str]:
    """Return the output files whose current digest no longer matches."""
    manifest = load_manifest(path)
    out_dir = Path(path).parent
    stale = []
    for rel, digest in manifest.get("outputs", {}).items():  # type: ignore[union-attr]
        target = out_dir / rel
        if not target.exists() or sha256_file(target) != digest:
            stale.append(rel)
    return stale
