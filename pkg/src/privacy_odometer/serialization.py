"""JSON-lines helpers with round-trip float formatting.

Floats are written with 17 significant digits so binary64 values survive a
round trip through any conforming parser; infinities become ``"inf"``.
"""

from __future__ import annotations

import json
import math

import numpy as np

__all__ = ["format_number", "dumps_line", "parse_number"]


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        raise ValueError("NaN is not serializable")
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _encode(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in value) + "]"
    return format_number(value)


def dumps_line(record: dict) -> str:
    """One JSON object on one line, keys in insertion order."""
    return _encode(record)


def parse_number(value) -> float:
    if isinstance(value, str):
        if value == "inf":
            return math.inf
        if value == "-inf":
            return -math.inf
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    return float(value)
