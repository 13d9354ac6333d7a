"""CSV and JSON artifacts.

CSV files use ``.`` as decimal separator, ``\\n`` line endings and a header
row, optionally preceded by ``# key=value`` comment lines (the seed of a run
is recorded this way).  Floats are written with ``repr`` so every value
re-parses to the identical float.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .pointproc import PointPattern
from .stats import TestReport


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def render_csv(header: Sequence[str], rows: Iterable[Sequence], comments: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (comments or {}).items():
        buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_text(text: str, out: str | Path | None) -> None:
    """Write to ``out`` (``None`` or ``-`` means standard output)."""
    if out is None or str(out) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse an artifact into (comments, header, rows)."""
    comments: dict = {}
    body = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                comments[key.strip()] = value.strip()
            else:
                body.append(line)
    reader = csv.reader(body)
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigError(f"{path}: empty artifact (no header row)") from None
    rows = [r for r in reader if r]
    return comments, header, rows


def read_column(path: str | Path, column: str | None = None) -> np.ndarray:
    """One numeric column of a CSV artifact (default: ``normalized``, ``point`` or the last column)."""
    _, header, rows = read_csv(path)
    if column is None:
        column = next((c for c in ("normalized", "point", "value") if c in header), header[-1])
    if column not in header:
        raise ConfigError(f"{path}: no column {column!r} (have {', '.join(header)})")
    i = header.index(column)
    vals = np.array([float(r[i]) for r in rows], dtype=float)
    if vals.size == 0:
        raise ConfigError(f"{path}: empty sample")
    return vals


def pattern_to_csv(pattern: PointPattern) -> str:
    return render_csv(
        ["index", "point"],
        ((i + 1, float(p)) for i, p in enumerate(pattern.points)),
        {"truncation": repr(pattern.truncation)},
    )


def pattern_from_csv(path: str | Path) -> PointPattern:
    comments, header, rows = read_csv(path)
    if header != ["index", "point"]:
        raise ConfigError(f"{path}: expected columns index,point")
    pts = [float(r[1]) for r in rows]
    return PointPattern(pts, float(comments.get("truncation", "inf")))


def report_to_json(report: TestReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> TestReport:
    return TestReport.from_dict(json.loads(text))
