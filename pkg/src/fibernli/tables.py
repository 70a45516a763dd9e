"""CSV tables with a provenance comment line.

Every file starts with ``# artifact=fibernli version=<v> config_hash=<h>``
followed by the column header. Floats are written with ``repr`` so reruns
are byte-identical and values round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import math

from .errors import SchemaError

ARTIFACT = "fibernli"


def _version():
    from . import __version__

    return __version__


def provenance_line(config_hash):
    return f"# artifact={ARTIFACT} version={_version()} config_hash={config_hash}"


def _cell(v):
    if v is None:
        return ""
    if hasattr(v, "item"):  # numpy scalar
        v = v.item()
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(float(v)) if math.isfinite(v) else str(v)
    return str(v)


def format_csv(columns, rows, config_hash):
    buf = io.StringIO()
    buf.write(provenance_line(config_hash) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, columns, rows, config_hash):
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(columns, rows, config_hash))


class CSVAppender:
    """Row-at-a-time writer that flushes after each row, so partial results
    survive a failure later in the run."""

    def __init__(self, path, columns, config_hash):
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._fh.write(provenance_line(config_hash) + "\n")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)
        self._fh.flush()

    def write(self, row):
        self._w.writerow([_cell(v) for v in row])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_provenance(path):
    """Key/value pairs from the leading comment line (empty if absent)."""
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        return {}
    return dict(tok.split("=", 1) for tok in first[1:].split() if "=" in tok)


def _number(s):
    if s == "":
        return None
    try:
        v = int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            return s
    return v


def read_csv(path, required=()):
    """Rows as dicts with numeric cells converted; ``#`` lines are skipped.

    Raises SchemaError naming the first missing required column, or a
    required column holding a non-numeric value where a number is expected.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: no header row", column=None)
    reader = csv.DictReader(lines)
    cols = reader.fieldnames or []
    for c in required:
        if c not in cols:
            raise SchemaError(f"{path}: missing column {c!r}", column=c)
    rows = []
    for r in reader:
        if None in r:
            raise SchemaError(f"{path}: row {reader.line_num} has extra cells", column=None)
        rows.append({k: _number(v if v is not None else "") for k, v in r.items()})
    return cols, rows
