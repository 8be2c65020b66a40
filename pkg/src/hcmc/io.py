"""Coefficient files, CSV tables and atomic writes.

Coefficient file format::

    {"d": 2, "coeffs": [{"k": [-1, 0], "re": 0.5, "im": 0}, ...]}

Serialization is canonical: entries in lexicographic frequency order, floats
with 17 significant digits, one entry per line.  An optional ``"meta"`` object
follows the coefficients and is ignored when reading.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from hcmc.trigpoly import TrigPoly


class CoefficientFormatError(ValueError):
    pass


def format_float(x: float) -> str:
    x = float(x) + 0.0  # canonical zero: -0.0 prints as "0"
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    return format(x, ".17g")


def dumps_coeffs(f: TrigPoly, meta: dict | None = None) -> str:
    lines = []
    for k, c in zip(f.keys.tolist(), f.values):
        key = ", ".join(str(v) for v in k)
        lines.append(f'  {{"k": [{key}], "re": {format_float(c.real)}, "im": {format_float(c.imag)}}}')
    body = ",\n".join(lines)
    coeffs = f"[\n{body}\n]" if lines else "[]"
    tail = f',\n"meta": {json.dumps(meta, sort_keys=True)}' if meta is not None else ""
    return f'{{"d": {f.d},\n"coeffs": {coeffs}{tail}}}\n'


def loads_coeffs(text: str) -> TrigPoly:
    """Parse a coefficient document.

    Raises
    ------
    CoefficientFormatError
        On malformed input, dimension mismatches or duplicate frequencies.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CoefficientFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "d" not in doc or "coeffs" not in doc:
        raise CoefficientFormatError('expected an object with "d" and "coeffs"')
    d = doc["d"]
    if not isinstance(d, int) or d < 1:
        raise CoefficientFormatError(f"invalid dimension {d!r}")
    entries = doc["coeffs"]
    if not isinstance(entries, list):
        raise CoefficientFormatError('"coeffs" must be a list')
    keys = np.empty((len(entries), d), dtype=np.int64)
    values = np.empty(len(entries), dtype=np.complex128)
    seen = set()
    for i, entry in enumerate(entries):
        try:
            k = tuple(entry["k"])
            re, im = float(entry.get("re", 0.0)), float(entry.get("im", 0.0))
        except (KeyError, TypeError, ValueError):
            raise CoefficientFormatError(f"malformed entry {i}: {entry!r}") from None
        if len(k) != d or not all(isinstance(v, int) for v in k):
            raise CoefficientFormatError(f"entry {i}: frequency {list(k)} is not an integer vector of length {d}")
        if k in seen:
            raise CoefficientFormatError(f"duplicate frequency {list(k)}")
        seen.add(k)
        keys[i] = k
        values[i] = complex(re, im)
    return TrigPoly(d, keys, values)


def read_meta(text: str) -> dict | None:
    return json.loads(text).get("meta")


def read_coeffs(path) -> TrigPoly:
    return loads_coeffs(Path(path).read_text())


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_coeffs(path, f: TrigPoly, meta: dict | None = None) -> None:
    atomic_write(path, dumps_coeffs(f, meta))


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "inf" if math.isinf(v) else format_float(v)
    return str(v)


def dumps_csv(columns: list[str], rows: list[tuple], meta: dict | None = None) -> str:
    out = []
    if meta is not None:
        out.append("# " + json.dumps(meta, sort_keys=True))
    out.append(",".join(columns))
    out.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(out) + "\n"


def loads_csv(text: str) -> tuple[dict | None, list[dict]]:
    """Parse a table written by :func:`dumps_csv`; returns ``(meta, rows)``."""
    meta = None
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            if meta is None:
                meta = json.loads(line[1:])
            continue
        if line.strip():
            lines.append(line)
    if not lines:
        raise ValueError("empty table")
    header = lines[0].split(",")
    return meta, [dict(zip(header, line.split(","))) for line in lines[1:]]
