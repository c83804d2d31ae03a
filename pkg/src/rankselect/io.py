"""File formats: headerless matrix CSV, headered tables and JSON configs.

Matrices are written with ``repr`` of each float, which round-trips
binary64 values exactly.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np


class InputError(ValueError):
    """Malformed or inconsistent user input; carries a location when known."""


def read_matrix(path):
    """Read a headerless CSV of decimal floats into a 2-D array.

    Raises
    ------
    InputError
        On ragged rows, empty files or unparsable cells, naming the 1-based
        line and column.
    """
    path = Path(path)
    rows = []
    try:
        with path.open(newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                vals = []
                for col, cell in enumerate(row, start=1):
                    try:
                        v = float(cell)
                    except ValueError:
                        raise InputError(f"{path}:{lineno}:{col}: cannot parse {cell!r} as a number") from None
                    if not math.isfinite(v):
                        raise InputError(f"{path}:{lineno}:{col}: non-finite value {cell!r}")
                    vals.append(v)
                if rows and len(vals) != len(rows[0]):
                    raise InputError(
                        f"{path}:{lineno}: expected {len(rows[0])} columns, found {len(vals)}"
                    )
                rows.append(vals)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path}: no data")
    return np.array(rows, dtype=float)


def write_matrix(path, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for row in a:
            w.writerow([repr(float(v)) for v in row])


def write_table(path, records, columns=None):
    """Headered CSV from a list of dicts; columns default to the first record's keys."""
    records = list(records)
    if columns is None:
        columns = list(records[0]) if records else []
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for rec in records:
            w.writerow({k: _cell(rec.get(k)) for k in columns})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return "" if v is None else v


def read_table(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj):
    with Path(path).open("w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable, allow_nan=True)
        fh.write("\n")


def read_json(path):
    path = Path(path)
    try:
        with path.open() as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
