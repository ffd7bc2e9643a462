"""Delimited output with fixed, versioned schemas.

Every CSV starts with a ``# schema: <kind> v<N>`` comment line followed by
the mandatory header row. Floats are written with shortest round-trip
repr, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

SCHEMAS = {
    "converge": ("L", "h", "err_vanilla", "err_modified", "err_euler"),
    "oscillate": ("l", "t", "vanilla", "modified", "truth"),
    "train": ("step", "loss"),
}

__all__ = ["SCHEMAS", "SCHEMA_VERSION", "SchemaError", "write_csv", "read_csv", "detect_kind"]


class SchemaError(ValueError):
    """CSV does not match the expected schema."""


def _format(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, kind: str, rows, comments=()) -> Path:
    """Write rows under the named schema; extra comment lines go after the tag."""
    if kind not in SCHEMAS:
        raise ValueError(f"unknown CSV kind {kind!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = SCHEMAS[kind]
    lines = [f"# schema: {kind} v{SCHEMA_VERSION}"]
    lines.extend(f"# {c}" for c in comments)
    lines.append(",".join(header))
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, schema {kind!r} has {len(header)}")
        lines.append(",".join(_format(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def detect_kind(path) -> str:
    """Infer the schema kind from the leading schema comment."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
    if first.startswith("# schema:"):
        return first.split(":", 1)[1].strip().split()[0]
    raise SchemaError(f"{path} carries no schema tag; pass the kind explicitly")


def read_csv(path, kind: str) -> dict:
    """Read a schema'd CSV into a dict of float column arrays.

    Raises :class:`SchemaError` naming the first schema column missing from
    the file's header.
    """
    if kind not in SCHEMAS:
        raise ValueError(f"unknown CSV kind {kind!r}")
    expected = SCHEMAS[kind]
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty; expected a {kind!r} header row") from None
        header = [h.strip() for h in header]
        for name in expected:
            if name not in header:
                raise SchemaError(f"{path} is missing column {name!r} required by schema {kind!r}")
        index = {name: header.index(name) for name in expected}
        columns = {name: [] for name in expected}
        for row in reader:
            if not row:
                continue
            for name in expected:
                columns[name].append(float(row[index[name]]))
    return {name: np.asarray(values) for name, values in columns.items()}
