"""Deterministic JSON with floats written at 17 significant digits."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np


def _float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    s = format(x, ".17g")
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


def _write(obj, out: list, indent: int | None, level: int) -> None:
    nl = "" if indent is None else "\n" + " " * (indent * (level + 1))
    close = "" if indent is None else "\n" + " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        out.append(json.dumps(bool(obj) if obj is not None else None))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(",")
            out.append(nl + json.dumps(str(key)) + ":" + ("" if indent is None else " "))
            _write(obj[key], out, indent, level + 1)
        out.append(close + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = obj.tolist() if isinstance(obj, np.ndarray) else obj
        # numeric leaf lists stay on one line
        flat = indent is None or all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in items)
        out.append("[")
        for i, v in enumerate(items):
            if i:
                out.append(",")
            if not flat:
                out.append(nl)
            _write(v, out, None if flat else indent, level + 1)
        out.append(("" if flat else close) + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int | None = 1) -> str:
    out: list[str] = []
    _write(obj, out, indent, 0)
    return "".join(out) + "\n"


def dump(obj, path) -> str:
    """Write ``obj`` to ``path``; returns the SHA-256 of the bytes written."""
    text = dumps(obj).encode()
    Path(path).write_bytes(text)
    return hashlib.sha256(text).hexdigest()


def load(path):
    return json.loads(Path(path).read_text())


def complex_pairs(a: np.ndarray) -> list:
    """Nested lists with complex values replaced by ``[re, im]`` pairs."""
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def from_pairs(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
