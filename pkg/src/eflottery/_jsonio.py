"""Diff-stable JSON: floats at 12 significant digits, numpy scalars unwrapped."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np

DIGITS = 12


def rounded(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x or x in (float("inf"), float("-inf")):
            return str(x)
        r = float(f"{x:.{DIGITS}g}")
        return 0.0 if r == 0.0 else r
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(rounded(obj), indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def fmt(x) -> str:
    return f"{float(x):.{DIGITS}g}"
