"""Deterministic report serialization: JSON payloads and CSV tables.

Numbers are written with 12 significant digits, files use UTF-8 with LF
line endings, and repeated runs with identical inputs produce identical
bytes. Key order in JSON follows insertion order, which the callers keep
deterministic.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = ["format_number", "dumps", "write_report_files"]


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if math.isnan(v) or math.isinf(v):
        raise ValueError(f"non-finite number in report: {v!r}")
    s = f"{v:.12g}"
    return s


def _escape(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dumps(obj, indent: int = 2) -> str:
    """Serialize to JSON with 12-significant-digit numbers."""

    def render(o, depth: int) -> str:
        pad = " " * (indent * depth)
        pad_in = " " * (indent * (depth + 1))
        if o is None:
            return "null"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, float, np.integer, np.floating)):
            return format_number(o)
        if isinstance(o, str):
            return _escape(o)
        if isinstance(o, Mapping):
            if not o:
                return "{}"
            parts = [
                f"{pad_in}{_escape(str(k))}: {render(v, depth + 1)}"
                for k, v in o.items()
            ]
            return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            parts = [f"{pad_in}{render(v, depth + 1)}" for v in o]
            return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
        raise TypeError(f"cannot serialize {type(o).__name__} in a report")

    return render(obj, 0) + "\n"


def write_report_files(
    out_dir: str | Path,
    payload: Mapping,
    tables: Mapping[str, tuple[Sequence[str], Sequence[Sequence]]],
) -> list[Path]:
    """Write report.json plus one CSV per table; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    report_path = out / "report.json"
    report_path.write_bytes(dumps(payload).encode("utf-8"))
    written.append(report_path)
    for name, (columns, rows) in tables.items():
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(list(columns))
        for row in rows:
            writer.writerow(
                [
                    cell if isinstance(cell, str) else format_number(cell)
                    for cell in row
                ]
            )
        path = out / f"{name}.csv"
        path.write_bytes(buf.getvalue().encode("utf-8"))
        written.append(path)
    return written
