"""CSV emission shared by all modules.

Files start with ``#``-prefixed ``key: value`` metadata lines, then a header
row, then comma-separated rows. Floats are written with 17 significant digits
so that re-parsing reproduces them bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from collections.abc import Iterable, Mapping, Sequence
from numbers import Integral, Real

import numpy as np


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, Integral):
        return str(int(v))
    if isinstance(v, Real):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(
    path: str | os.PathLike,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    meta: Mapping | None = None,
) -> None:
    with open(path, "w", newline="") as fh:
        for key, val in (meta or {}).items():
            if not isinstance(val, str):
                val = json.dumps(val, sort_keys=True, default=_json_default)
            fh.write(f"# {key}: {val}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dict__"):
        return vars(obj)
    return str(obj)


def read_csv(path: str | os.PathLike) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Return ``(meta, header, rows)``; values are left as strings."""
    meta: dict[str, str] = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            meta[key.strip()] = val.strip()
        else:
            body.append(line)
    reader = list(csv.reader(body))
    if not reader:
        return meta, [], []
    return meta, reader[0], reader[1:]


def read_numeric_csv(path: str | os.PathLike) -> tuple[dict[str, str], list[str], np.ndarray]:
    meta, header, rows = read_csv(path)
    return meta, header, np.array(rows, dtype=float).reshape(len(rows), len(header))
