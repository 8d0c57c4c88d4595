"""Deterministic report serialization.

Reports are JSON with sorted keys and every float printed with 17
significant digits, so identical runs produce byte-identical files.
"""
from __future__ import annotations

import hashlib

import numpy as np


def fmt_float(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"reports must not contain non-finite values (got {x!r})")
    return format(float(x), ".17g")


def canonical_json(obj) -> str:
    """Serialize with sorted keys and fixed float formatting."""
    return _encode(obj)


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        out = out.replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t")
        return f'"{out}"'
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        inner = ",".join(f"{_encode(str(k))}:{_encode(v)}" for k, v in items)
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__} into a report")


def sha256_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def write_report(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))
        fh.write("\n")


def write_csv(path, header, rows):
    """Deterministic CSV with repr-formatted floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(str(h) for h in header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    cells.append(fmt_float(float(v)))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
