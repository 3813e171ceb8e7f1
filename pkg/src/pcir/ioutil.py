"""File output helpers: atomic writes and deterministic JSON.

All result files are written via temp-file-plus-rename so an interrupted
run never leaves a partially written artifact, and floats are serialized
with 17 significant digits, which round-trips float64 exactly and keeps
output bytes stable across runs.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def dumps_json_17g(obj, indent: int = 2) -> str:
    """json.dumps with sorted keys and floats formatted as %.17g."""

    def encode(value, depth: int) -> str:
        pad = " " * (indent * depth)
        pad_in = " " * (indent * (depth + 1))
        if value is None:
            return "null"
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, int):
            return str(value)
        if isinstance(value, float):
            if not np.isfinite(value):
                raise ValueError("non-finite float in JSON output")
            return format(value, ".17g")
        if isinstance(value, str):
            return json.dumps(value)
        if isinstance(value, dict):
            if not value:
                return "{}"
            items = [f"{pad_in}{json.dumps(str(k))}: {encode(v, depth + 1)}"
                     for k, v in sorted(value.items())]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(value, (list, tuple)):
            if not len(value):
                return "[]"
            items = [f"{pad_in}{encode(v, depth + 1)}" for v in value]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        raise TypeError(f"cannot serialize {type(value).__name__}")

    return encode(_jsonify(obj), 0)
