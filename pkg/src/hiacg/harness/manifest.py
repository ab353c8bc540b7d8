"""Run manifests: enough to replay a harness run bit for bit (single-threaded)."""
from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path

import numpy as np


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def build_manifest(command: str, seed: int, config: dict, checkpoints: dict | None = None) -> dict:
    """``checkpoints`` maps a role name to a path or to raw checkpoint bytes."""
    hashes = {}
    for role, ref in sorted((checkpoints or {}).items()):
        if isinstance(ref, (bytes, bytearray)):
            hashes[role] = hashlib.sha256(ref).hexdigest()[:16]
        else:
            hashes[role] = file_hash(ref)
    return {
        "command": command,
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
        "checkpoints": hashes,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def write_manifest(path, manifest: dict):
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
