"""Deterministic CSV and JSON output with 17 significant digits."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError


def fmt(x) -> str:
    """Format a number with 17 significant digits (integers verbatim)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_value(v, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        # JSON has no NaN or infinity
        return "null" if not math.isfinite(float(v)) else fmt(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(val, indent, level + 1)}" for k, val in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        if len(v) == 0:
            return "[]"
        return "[" + ", ".join(_json_value(x, indent, level + 1) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps(obj: dict, indent=2) -> str:
    """JSON text keeping the dict's key order and 17-digit floats."""
    return _json_value(obj, indent, 0) + "\n"


def _target(directory, name) -> Path:
    path = Path(directory)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidConfigError(f"cannot create output directory {path}: {exc}") from exc
    return path / name


def write_json(directory, name, obj) -> Path:
    target = _target(directory, name)
    try:
        target.write_text(dumps(obj))
    except OSError as exc:
        raise InvalidConfigError(f"cannot write {target}: {exc}") from exc
    return target


def write_csv(directory, name, header, rows) -> Path:
    target = _target(directory, name)
    try:
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(x) for x in row])
    except OSError as exc:
        raise InvalidConfigError(f"cannot write {target}: {exc}") from exc
    return target
