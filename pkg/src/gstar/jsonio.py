"""JSON output with fixed float formatting.

Floats are written with 17 significant digits so every value reloads to the
identical double; non-finite floats become ``null``. Dicts are indented one
key per line, lists stay on one line.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .series import fmt_float


def _scalar(obj):
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (np.bool_,)):
        return json.dumps(bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _inline(obj):
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_inline(x) for x in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_inline(v)}" for k, v in obj.items()) + "}"
    return _scalar(obj)


def dumps(obj, _level: int = 0) -> str:
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        pad = "  " * (_level + 1)
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * _level + "}"
    if isinstance(obj, (list, tuple)) and any(isinstance(x, dict) for x in obj):
        pad = "  " * (_level + 1)
        items = [pad + dumps(x, _level + 1) for x in obj]
        return "[\n" + ",\n".join(items) + "\n" + "  " * _level + "]"
    return _inline(obj)


def dump(obj, path: str | Path) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def load(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
