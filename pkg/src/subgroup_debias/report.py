"""Deterministic report serialization.

Report files must be byte-identical across reruns and worker counts, so
floats are written with repr round-tripping, dict keys are sorted, and
nothing time- or host-dependent goes into a hashed file. Wall-clock timings
go to a separate sidecar that is documented as non-deterministic.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

__all__ = [
    "canonical_json",
    "manifest_digest",
    "write_json",
    "write_csv",
    "write_timing",
]


def canonical_json(payload):
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def manifest_digest(manifest):
    """sha256 over the canonical JSON encoding of the manifest."""
    return hashlib.sha256(canonical_json(manifest).encode("utf-8")).hexdigest()


def write_json(path, payload):
    Path(path).write_text(canonical_json(payload), encoding="utf-8")


def write_csv(path, fieldnames, rows, manifest_hash=None):
    """CSV with an optional leading manifest comment line.

    Floats are rendered with repr so identical numbers give identical bytes.
    """
    def render(v):
        if isinstance(v, float):
            return repr(v)
        return v

    with open(path, "w", newline="", encoding="utf-8") as fh:
        if manifest_hash is not None:
            fh.write(f"# manifest_hash={manifest_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: render(v) for k, v in row.items()})


def write_timing(path, seconds, note="wall clock; not covered by determinism guarantees"):
    Path(path).write_text(
        json.dumps({"runtime_seconds": seconds, "note": note}, sort_keys=True) + "\n",
        encoding="utf-8",
    )
