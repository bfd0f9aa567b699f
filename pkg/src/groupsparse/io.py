"""File formats: CSV and MatrixMarket matrices, JSON partitions, atomic writes.

CSV is comma separated with ``.`` decimals and LF line endings. Floats are
written with ``repr`` so they read back bit for bit.
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.io

from .errors import InputError
from .model import GroupPartition


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file in the same directory and a rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise InputError(f"cannot write to {directory}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def dicts_csv_text(rows: Sequence[Mapping]) -> str:
    if not rows:
        return ""
    header = list(rows[0].keys())
    return csv_text(header, ([r[k] for k in header] for r in rows))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_with_sidecar(path, text: str, meta: Mapping) -> None:
    """Write a result file and its provenance record ``<path>.meta.json``."""
    atomic_write_text(path, text)
    write_json(sidecar_path(path), dict(meta))


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _finite(arr: np.ndarray, path) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{path} contains NaN or Inf")
    return arr


def read_matrix(path) -> np.ndarray:
    """Dense matrix from CSV (one row per line) or MatrixMarket (``.mtx``)."""
    path = Path(path)
    if path.suffix.lower() == ".mtx":
        if not path.exists():
            raise InputError(f"cannot read {path}: no such file")
        try:
            M = scipy.io.mmread(str(path))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot parse MatrixMarket file {path}: {exc}") from exc
        M = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
        return _finite(np.asarray(M, dtype=float).reshape(M.shape[0], -1), path)
    text = _read_text(path)
    if not text.strip():
        raise InputError(f"{path} is empty")
    try:
        M = np.loadtxt(_io.StringIO(text), delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise InputError(f"cannot parse CSV matrix {path}: {exc}") from exc
    if M.size == 0:
        raise InputError(f"{path} is empty")
    return _finite(M, path)


def read_vector(path) -> np.ndarray:
    """Vector from a CSV column, a CSV row, or a one-column MatrixMarket file."""
    M = read_matrix(path)
    if min(M.shape) != 1:
        raise InputError(f"{path} holds a {M.shape[0]}x{M.shape[1]} matrix, expected a vector")
    return M.ravel()


def write_matrix_mtx(path, M) -> None:
    buf = _io.BytesIO()
    scipy.io.mmwrite(buf, np.asarray(M, dtype=float))
    atomic_write_text(path, buf.getvalue().decode("ascii"))


def read_partition(path) -> GroupPartition:
    """Partition from JSON: a list of group sizes, or a list of index lists."""
    text = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not data:
        raise InputError(f"{path} must hold a nonempty JSON list")
    try:
        if all(isinstance(g, int) for g in data):
            return GroupPartition.from_sizes(data)
        if all(isinstance(g, list) for g in data):
            return GroupPartition.from_groups(data)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    raise InputError(f"{path} must list group sizes or index lists")


def read_csv_rows(path) -> list[dict]:
    text = _read_text(path)
    return list(csv.DictReader(_io.StringIO(text)))
