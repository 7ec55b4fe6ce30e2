"""Readers and writers for the on-disk formats.

Matrix files come in two flavours. CSV has a first line ``n,p`` followed by
``n`` rows of ``p`` values. The binary form is the 4-byte magic ``DPHC``,
``n`` and ``p`` as little-endian uint64, then ``n * p`` little-endian
float64 values in row-major order. Floats are written with ``repr`` so a
CSV round trip is exact.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .affinity import AffinityMatrix

MAGIC = b"DPHC"
_HEADER = struct.Struct("<4sQQ")


class FormatError(ValueError):
    """A file exists but its contents do not match the expected format."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _rows_csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def is_binary_matrix(path: Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def write_matrix(path, y: np.ndarray, binary: bool | None = None) -> None:
    """Write ``y``; binary when asked or when the suffix is ``.bin``."""
    path = Path(path)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("matrix must be 2-D")
    if binary is None:
        binary = path.suffix == ".bin"
    if binary:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, *y.shape))
            fh.write(np.ascontiguousarray(y, dtype="<f8").tobytes())
        return
    n, p = y.shape
    body = [[n, p]] + [[_fmt(v) for v in row] for row in y]
    path.write_text(_rows_csv(body))


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if is_binary_matrix(path):
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        _, n, p = _HEADER.unpack_from(raw)
        expected = _HEADER.size + 8 * n * p
        if len(raw) != expected:
            raise FormatError(f"{path}: expected {expected} bytes for {n} x {p}, found {len(raw)}")
        return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, p).astype(np.float64)
    rows = list(csv.reader(path.read_text().splitlines()))
    try:
        n, p = (int(v) for v in rows[0])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: first line must be 'n,p'") from exc
    body = rows[1:]
    if len(body) != n:
        raise FormatError(f"{path}: header says {n} rows, found {len(body)}")
    out = np.empty((n, p))
    for i, row in enumerate(body):
        if len(row) != p:
            raise FormatError(f"{path}: row {i} has {len(row)} values, expected {p}")
        try:
            out[i] = [float(v) for v in row]
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from exc
    return out


def write_affinity(path, mat: AffinityMatrix) -> None:
    body = [[mat.n, mat.mode]] + [[_fmt(v) for v in row] for row in mat.values]
    Path(path).write_text(_rows_csv(body))


def read_affinity(path) -> AffinityMatrix:
    path = Path(path)
    rows = list(csv.reader(path.read_text().splitlines()))
    try:
        n, mode = int(rows[0][0]), rows[0][1]
        values = np.array([[float(v) for v in row] for row in rows[1:]])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: expected 'n,mode' header then n numeric rows") from exc
    if values.shape != (n, n):
        raise FormatError(f"{path}: expected {n} x {n} values, found {values.shape}")
    return AffinityMatrix(values, mode)


def write_linkage(path, z: np.ndarray) -> None:
    body = [["a", "b", "value", "size"]]
    body += [[int(a), int(b), _fmt(v), int(s)] for a, b, v, s in z]
    Path(path).write_text(_rows_csv(body))


def read_linkage(path) -> np.ndarray:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if not rows or rows[0] != ["a", "b", "value", "size"]:
        raise FormatError(f"{path}: missing 'a,b,value,size' header")
    return np.array([[float(v) for v in row] for row in rows[1:]]).reshape(-1, 4)


def write_assignments(path, z: Sequence[int]) -> None:
    Path(path).write_text(_rows_csv([["sample", "vertex"]] + [[i, int(v)] for i, v in enumerate(z)]))


def read_assignments(path) -> list[int]:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if not rows or rows[0] != ["sample", "vertex"]:
        raise FormatError(f"{path}: missing 'sample,vertex' header")
    out = []
    for k, row in enumerate(rows[1:]):
        try:
            i, v = int(row[0]), int(row[1])
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: bad row {k + 1}") from exc
        if i != k:
            raise FormatError(f"{path}: samples must be listed in order, row {k + 1} has {i}")
        out.append(v)
    return out


def write_labels(path, names: Sequence[str], levels: Sequence[Sequence]) -> None:
    Path(path).write_text(_rows_csv([list(names)] + [list(r) for r in zip(*levels)]))


def read_labels(path) -> tuple[list[str], list[list[str]]]:
    """Header of level names (coarse to fine), then one row of labels per sample."""
    path = Path(path)
    rows = [r for r in csv.reader(path.read_text().splitlines()) if r]
    if len(rows) < 2:
        raise FormatError(f"{path}: need a header and at least one sample row")
    names = rows[0]
    for k, row in enumerate(rows[1:]):
        if len(row) != len(names):
            raise FormatError(f"{path}: row {k + 1} has {len(row)} labels, expected {len(names)}")
    return names, [list(col) for col in zip(*rows[1:])]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_text(_rows_csv([list(header)] + [list(r) for r in rows]))
