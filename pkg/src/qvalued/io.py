"""Text file formats: field documents, measure and point files, oracle
tables, CSV records and covering reports.

All whitespace tables accept ``#`` comments (whole-line or trailing) and
blank lines.  Parse failures raise :class:`ParseError` with 1-based line
and column numbers.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
from pathlib import Path

import numpy as np

from .builtin import BUILTIN_FIELDS, builtin_field
from .errors import InputError, ParseError
from .meanflat import DiscreteMeasure
from .multifield import field_from_dict, field_to_dict

__all__ = [
    "read_field",
    "write_field",
    "parse_table",
    "read_table",
    "read_points",
    "read_measure",
    "write_measure",
    "read_oracle_table",
    "write_oracle_table",
    "format_float",
    "write_csv",
    "format_covering",
    "write_covering",
    "read_config",
]


def format_float(v) -> str:
    """Round-trippable text for a float."""
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# fields


def read_field(source):
    """Field from a built-in name, a JSON file path or a JSON string."""
    if isinstance(source, dict):
        return field_from_dict(source)
    text = str(source)
    if text in BUILTIN_FIELDS:
        return builtin_field(text)
    path = Path(text)
    if path.exists():
        doc, origin = path.read_text(), str(path)
    elif text.lstrip().startswith("{"):
        doc, origin = text, None
    else:
        raise InputError(f"{text!r} is neither a field file nor a built-in field ({', '.join(BUILTIN_FIELDS)})")
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno, origin) from None
    if not isinstance(data, dict):
        raise ParseError("a field document must be a JSON object", 1, 1, origin)
    return field_from_dict(data)


def write_field(f, path):
    Path(path).write_text(json.dumps(field_to_dict(f), indent=2) + "\n")


# ---------------------------------------------------------------------------
# whitespace tables


def parse_table(text: str, columns=None, source=None) -> np.ndarray:
    """Parse rows of whitespace-separated floats into an ``(N, C)`` array.

    ``columns`` fixes the row length; otherwise the first data row sets it.
    """
    rows = []
    width = columns
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        vals = []
        pos = 0
        for tok in body.split():
            col = body.index(tok, pos) + 1
            pos = col - 1 + len(tok)
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"not a number: {tok!r}", ln, col, source) from None
            if not np.isfinite(v):
                raise ParseError(f"non-finite value {tok!r}", ln, col, source)
            vals.append(v)
        if width is None:
            width = len(vals)
        if len(vals) != width:
            raise ParseError(f"expected {width} values, found {len(vals)}", ln, 1, source)
        rows.append(vals)
    if not rows:
        return np.zeros((0, width or 0))
    return np.array(rows, dtype=float)


def read_table(path, columns=None) -> np.ndarray:
    return parse_table(Path(path).read_text(), columns, str(path))


def read_points(path, m=None) -> np.ndarray:
    """Point file: one point per line, ``m`` coordinates."""
    return read_table(path, m)


def read_measure(path, m=None) -> DiscreteMeasure:
    """Measure file: one atom per line, ``m`` coordinates then the weight."""
    arr = read_table(path, None if m is None else m + 1)
    if arr.shape[1] < 2:
        raise ParseError("measure rows need coordinates and a weight", 1, 1, str(path))
    try:
        return DiscreteMeasure(arr[:, :-1], arr[:, -1], m=arr.shape[1] - 1)
    except InputError as exc:
        bad = np.flatnonzero(arr[:, -1] < 0)
        raise ParseError(str(exc), int(bad[0]) + 1 if len(bad) else None, None, str(path)) from None


def write_measure(mu: DiscreteMeasure, path, comment=None):
    lines = [f"# {comment}"] if comment else []
    for p, w in zip(mu.points, mu.weights):
        lines.append(" ".join(format_float(v) for v in (*p, w)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_oracle_table(path):
    """Synthetic oracle table: rows ``y_1 ... y_m r I`` on a full tensor grid."""
    from .covering import TableOracle

    rows = read_table(path)
    if rows.shape[1] < 3:
        raise ParseError("oracle rows need coordinates, a radius and a value", 1, 1, str(path))
    return TableOracle.from_rows(rows, source=str(path))


def write_oracle_table(oracle, path, comment=None):
    lines = [f"# {comment}"] if comment else []
    for row in oracle.to_rows():
        lines.append(" ".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# outputs


def write_csv(target, header, rows):
    """CSV with a header row; floats use ``%.17g``.  ``target`` is a path or text stream."""

    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return str(v)

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([cell(v) for v in row])

    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="") as fh:
            emit(fh)
    else:
        emit(target)


def format_covering(result, audit=None) -> str:
    """One ball per line (center, radius, scale index, tag) and a summary block."""
    out = _io.StringIO()
    m = result.m
    cols = [f"c{i + 1}" for i in range(m)] + ["radius", "scale_index", "tag", "points"]
    out.write("# " + " ".join(cols) + "\n")
    for b, a in zip(result.balls, result.assigned):
        out.write(" ".join(format_float(v) for v in b.center))
        out.write(f" {format_float(b.radius)} {b.scale_index} {b.tag} {len(a)}\n")
    out.write("# summary\n")
    summary = {
        "balls": len(result.balls),
        "packing_sum": result.packing_sum,
        "normalized_packing": result.normalized_packing,
        "rounds": result.rounds,
        "kappa": result.kappa,
    }
    if audit is not None:
        summary["audit"] = "pass" if audit.covered else "fail"
    for key in ("N", "raw_count", "U0"):
        if key in result.info:
            summary[key] = result.info[key]
    if result.drop_log:
        summary["drop_log"] = " ".join(format_float(u) for u in result.drop_log)
    for k, v in summary.items():
        if isinstance(v, float):
            v = format_float(v)
        out.write(f"# {k} = {v}\n")
    return out.getvalue()


def write_covering(result, path, audit=None):
    Path(path).write_text(format_covering(result, audit))


def read_config(path) -> dict:
    """JSON document whose keys mirror command-line flags (dashes or underscores)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno, str(path)) from None
    if not isinstance(data, dict):
        raise ParseError("a configuration document must be a JSON object", 1, 1, str(path))
    return {k.replace("-", "_"): v for k, v in data.items()}
