"""Point, weight, and matrix file formats.

Two containers, chosen by file extension:

* ``.csv``: text with a mandatory header line.  Point files use columns
  ``x,y,z`` optionally followed by weight columns ``w1..wm``; potential
  files use ``phi1..phim``.  Values are written with repr precision so a
  read-back is bitwise faithful.
* anything else (``.bin`` by convention): a 16-byte header (8-byte magic
  ``BFMMBIN1``, uint32 row count, uint32 column count, little endian)
  followed by row-major little-endian float64 data.

Parse failures raise FileFormatError carrying the 1-based line number.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FileFormatError

MAGIC = b"BFMMBIN1"
_BIN_HEADER = struct.Struct("<8sII")


def read_matrix_csv(path):
    """Read a CSV matrix; returns (header column names, float64 array)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise FileFormatError(f"{path}: line 1: missing header line",
                              path=path, line=1)
    header = [c.strip() for c in lines[0].split(",")]
    if any(not c for c in header):
        raise FileFormatError(f"{path}: line 1: empty column name in header",
                              path=path, line=1)
    ncols = len(header)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise FileFormatError(
                f"{path}: line {lineno}: expected {ncols} columns, got {len(parts)}",
                path=path, line=lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            bad = next(p for p in parts if not _parses(p))
            raise FileFormatError(
                f"{path}: line {lineno}: could not parse {bad.strip()!r} as a number",
                path=path, line=lineno) from None
    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, ncols))
    return header, data


def _parses(token):
    try:
        float(token)
        return True
    except ValueError:
        return False


def _as_2d(data):
    data = np.asarray(data, dtype=np.float64)
    return data[:, None] if data.ndim == 1 else data


def write_matrix_csv(path, header, data):
    data = _as_2d(data)
    if data.shape[1] != len(header):
        raise ValueError(f"header has {len(header)} names for {data.shape[1]} columns")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _BIN_HEADER.size:
        raise FileFormatError(f"{path}: truncated header ({len(raw)} bytes)",
                              path=path)
    magic, nrows, ncols = _BIN_HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}, not a matrix file",
                              path=path)
    expected = _BIN_HEADER.size + 8 * nrows * ncols
    if len(raw) != expected:
        raise FileFormatError(
            f"{path}: expected {expected} bytes for {nrows}x{ncols}, found {len(raw)}",
            path=path)
    data = np.frombuffer(raw, dtype="<f8", offset=_BIN_HEADER.size)
    return data.reshape(nrows, ncols).copy()


def write_matrix_binary(path, data):
    data = np.ascontiguousarray(_as_2d(data))
    with open(path, "wb") as fh:
        fh.write(_BIN_HEADER.pack(MAGIC, data.shape[0], data.shape[1]))
        fh.write(data.astype("<f8", copy=False).tobytes())


def _is_csv(path):
    return str(path).lower().endswith(".csv")


def read_points_file(path):
    """Read points and optional weights; returns ((N, 3), (N, m) or None)."""
    if _is_csv(path):
        header, data = read_matrix_csv(path)
        if len(header) < 3 or [h.lower() for h in header[:3]] != ["x", "y", "z"]:
            raise FileFormatError(
                f"{path}: line 1: point files start with columns x,y,z "
                f"(got {','.join(header[:3])})", path=path, line=1)
    else:
        data = read_matrix_binary(path)
        if data.shape[1] < 3:
            raise FileFormatError(
                f"{path}: point files need at least 3 columns, found {data.shape[1]}",
                path=path)
    points = np.ascontiguousarray(data[:, :3])
    weights = np.ascontiguousarray(data[:, 3:]) if data.shape[1] > 3 else None
    return points, weights


def write_points_file(path, points, weights=None):
    points = np.asarray(points, dtype=np.float64)
    blocks = [points]
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        blocks.append(w[:, None] if w.ndim == 1 else w)
    data = np.hstack(blocks)
    if _is_csv(path):
        header = ["x", "y", "z"] + [f"w{i + 1}" for i in range(data.shape[1] - 3)]
        write_matrix_csv(path, header, data)
    else:
        write_matrix_binary(path, data)


def read_matrix(path):
    """Read a plain matrix (weights, potentials, eigenvalues)."""
    if _is_csv(path):
        _, data = read_matrix_csv(path)
        return data
    return read_matrix_binary(path)


def write_matrix(path, data, prefix="phi"):
    data = _as_2d(data)
    if _is_csv(path):
        header = [f"{prefix}{i + 1}" for i in range(data.shape[1])]
        write_matrix_csv(path, header, data)
    else:
        write_matrix_binary(path, data)
