"""Small file and hashing helpers shared by the sweep and CLI layers."""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write ``text`` next to ``path`` and rename over it."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)
    return path


def finite_or_none(obj):
    """Recursively replace NaN/inf floats with None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [finite_or_none(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    return json.dumps(finite_or_none(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def stable_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()
