"""Surface CSV, constraint-box JSON and atomic file output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from collections import defaultdict
from pathlib import Path

import numpy as np

from .field_sim import ForwardSurface
from .params import ConstraintBox


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str | os.PathLike, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def surface_to_csv(surface: ForwardSurface) -> str:
    """One ``k,ell,f`` row per lattice point; floats in shortest round-trip form."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "ell", "f"])
    for k in range(surface.K + 1):
        for ell, f in enumerate(surface.row(k)):
            if not math.isnan(f):
                writer.writerow([k, ell, repr(float(f))])
    return buf.getvalue()


def write_surface_csv(surface: ForwardSurface, path: str | os.PathLike) -> None:
    atomic_write_text(path, surface_to_csv(surface))


def read_surface_csv(path: str | os.PathLike) -> ForwardSurface:
    """Load a surface; rows ``k >= 1`` may stop at maturity ``L`` (the part the likelihood reads)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read surface file {path}: {exc.strerror}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["k", "ell", "f"]:
        raise InputError(f"surface CSV header must be k,ell,f, got {','.join(reader.fieldnames or [])}")
    rows: dict[int, dict[int, float]] = defaultdict(dict)
    for lineno, rec in enumerate(reader, start=2):
        try:
            k, ell, f = int(rec["k"]), int(rec["ell"]), float(rec["f"])
        except (TypeError, ValueError):
            raise InputError(f"line {lineno}: fields k, ell must be integers and f a real number") from None
        if k < 0 or ell < 0:
            raise InputError(f"line {lineno}: k and ell must be non-negative")
        if ell in rows[k]:
            raise InputError(f"line {lineno}: duplicate point (k={k}, ell={ell})")
        rows[k][ell] = f
    if 0 not in rows:
        raise InputError("k: no row 0 (initial curve) in surface file")
    K = max(rows)
    if K < 1 or set(rows) != set(range(K + 1)):
        raise InputError("k: rows must run contiguously from 0 to K >= 1")
    L = len(rows[K]) - 1
    if L < 1:
        raise InputError(f"ell: last row k={K} needs at least maturities 0 and 1")
    arrays = []
    for k in range(K + 1):
        full = K + L - k + 1
        n = len(rows[k])
        if set(rows[k]) != set(range(n)) or not (n == full or (k > 0 and n == L + 1)):
            raise InputError(
                f"ell: row k={k} must hold maturities 0..{full - 1}" + (f" or 0..{L}" if k else "")
            )
        row = np.full(full, np.nan)
        row[:n] = [rows[k][i] for i in range(n)]
        arrays.append(row)
    return ForwardSurface.from_rows(K, L, arrays)


def read_json(path: str | os.PathLike) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc


def read_box_json(path: str | os.PathLike) -> ConstraintBox:
    data = read_json(path)
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object with beta, rho, b")
    try:
        return ConstraintBox.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise InputError(f"box: {exc}") from exc


def read_curve(path: str | os.PathLike) -> np.ndarray:
    """Numbers separated by commas or whitespace."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read initial curve {path}: {exc.strerror}") from exc
    try:
        return np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError:
        raise InputError(f"initial curve {path}: entries must be real numbers") from None
