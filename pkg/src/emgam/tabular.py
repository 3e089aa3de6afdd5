"""Minimal CSV reading and writing for numeric tables.

Values are parsed with ``float`` and written with ``repr``, so numbers
survive a write/read cycle exactly and output does not depend on locale.
"""

import csv

import numpy as np


class CSVFormatError(ValueError):
    pass


def read_csv(path):
    """Read a headed numeric CSV into an ordered dict of float arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise CSVFormatError(f"{path}: duplicate column names in header")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CSVFormatError(
                    f"{path}: line {reader.line_num}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise CSVFormatError(
                    f"{path}: line {reader.line_num}: non-numeric value"
                ) from None
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {h: arr[:, i].copy() for i, h in enumerate(header)}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path_or_file, columns):
    """Write an ordered mapping of equal-length columns."""
    names = list(columns)
    cols = [np.asarray(columns[c]) for c in names]
    n = cols[0].shape[0] if cols else 0

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(c[i].item()) for c in cols])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)
