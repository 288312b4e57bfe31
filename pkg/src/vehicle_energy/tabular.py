"""CSV reading with row-indexed errors, and write-then-rename output."""

from __future__ import annotations

import csv
import io
import math
import os
from pathlib import Path

from .errors import ConfigurationError, ParseError


def read_rows(path, header, optional=()):
    """Read a CSV whose header is ``header`` optionally followed by ``optional`` columns.

    Returns ``(columns, rows)`` where ``rows`` holds ``(row_index, fields)``
    with 1-based data-row indices. Blank lines are skipped but still counted.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                first = [h.strip() for h in next(reader)]
            except StopIteration:
                raise ParseError("empty file", 0) from None
            n = len(header)
            if first[:n] != list(header) or first[n:] != list(optional[:len(first) - n]):
                expected = ",".join(header) + "".join(f"[,{o}]" for o in optional)
                raise ParseError(f"expected header {expected}, found {','.join(first)}", 0)
            rows = []
            for index, row in enumerate(reader, start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(first):
                    raise ParseError(f"expected {len(first)} fields, found {len(row)}", index)
                rows.append((index, [c.strip() for c in row]))
            return tuple(first), rows
    except FileNotFoundError:
        raise ConfigurationError(f"file not found: {path}") from None
    except UnicodeDecodeError:
        raise ParseError("file is not UTF-8 text", 0) from None


def parse_float(text, row):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", row)
    return value


def parse_bool(text, row):
    low = text.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ParseError(f"not a boolean: {text!r}", row)


def parse_gear(text, row):
    try:
        gear = int(text)
    except ValueError:
        raise ParseError(f"not a gear number: {text!r}", row) from None
    if gear < 1:
        raise ParseError(f"gear must be >= 1, got {gear}", row)
    return gear


def atomic_write_bytes(path, data):
    """Write to a sibling temporary file, then rename over ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        tmp.write_bytes(data)
        tmp.replace(path)
    finally:
        if tmp.exists():
            tmp.unlink()


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
