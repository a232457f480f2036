"""Run manifests: config hash, dataset fingerprint, seed, component versions."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .gbt import MODEL_FORMAT_VERSION

MANIFEST_SCHEMA_VERSION = 1


@dataclass
class RunManifest:
    command: str
    seed: int | None
    config_hash: str
    dataset_fingerprint: str
    versions: dict = field(default_factory=dict)
    created_utc: str = ""
    schema_version: int = MANIFEST_SCHEMA_VERSION


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def fingerprint_paths(paths) -> str:
    """Order-independent digest over (filename, content-digest) pairs."""
    digest = hashlib.sha256()
    entries = []
    for path in paths:
        p = Path(path)
        if not p.exists():
            continue
        entries.append((p.name, hashlib.sha256(p.read_bytes()).hexdigest()))
    for name, h in sorted(entries):
        digest.update(name.encode("utf-8"))
        digest.update(h.encode("utf-8"))
    return digest.hexdigest()


def make_manifest(command: str, config: dict, input_paths, seed: int | None = None) -> RunManifest:
    return RunManifest(
        command=command,
        seed=seed,
        config_hash=config_hash(config),
        dataset_fingerprint=fingerprint_paths(input_paths),
        versions={"scoutval": __version__, "model_format": MODEL_FORMAT_VERSION},
        created_utc=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def write_manifest(man: RunManifest, path) -> None:
    payload = {
        "schema_version": man.schema_version,
        "command": man.command,
        "seed": man.seed,
        "config_hash": man.config_hash,
        "dataset_fingerprint": man.dataset_fingerprint,
        "versions": man.versions,
        "created_utc": man.created_utc,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
