"""Matrix Market text files and the raw dense binary container.

The reader accepts coordinate-format files with real, integer, or pattern
fields and general or symmetric symmetry. Indices are converted from 1-based
to 0-based, duplicate coordinates are summed, pattern entries get value 1.0,
and symmetric files are expanded by mirroring their strictly-lower entries.

Dense matrices round-trip through a 16-byte little-endian header (magic
"DMAT", u32 n_rows, u32 n_cols, u32 reserved) followed by row-major f32 data.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import INDEX_LIMIT, CooMatrix, CsrMatrix, DenseMatrix

DENSE_MAGIC = b"DMAT"
_DENSE_HEADER = struct.Struct("<4sIII")

_FIELDS = ("real", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric")


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content; the message names file and line."""


def _fail(path, lineno: int, msg: str):
    raise MatrixMarketError(f"{path}:{lineno}: {msg}")


def read_matrix_market(path) -> CsrMatrix:
    """Parse a Matrix Market coordinate file into canonical CSR."""
    with open(path, "r", encoding="utf-8") as fh:
        banner = fh.readline()
        if not banner.startswith("%%MatrixMarket"):
            _fail(path, 1, "missing %%MatrixMarket banner")
        tokens = banner.strip().split()
        if len(tokens) != 5:
            _fail(path, 1, "banner must have object, format, field, symmetry")
        obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
        if obj != "matrix":
            _fail(path, 1, f"unsupported object {obj!r}")
        if fmt != "coordinate":
            _fail(path, 1, f"unsupported format {fmt!r}")
        if field not in _FIELDS:
            _fail(path, 1, f"unsupported field {field!r}")
        if symmetry not in _SYMMETRIES:
            _fail(path, 1, f"unsupported symmetry {symmetry!r}")
        symmetric = symmetry == "symmetric"
        pattern = field == "pattern"

        lineno = 1
        dims = None
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            parts = s.split()
            if len(parts) != 3:
                _fail(path, lineno, "size line must be three integers")
            try:
                dims = tuple(int(p) for p in parts)
            except ValueError:
                _fail(path, lineno, "size line must be three integers")
            break
        if dims is None:
            _fail(path, lineno, "missing size line")
        n_rows, n_cols, declared = dims
        if n_rows < 0 or n_cols < 0 or declared < 0:
            _fail(path, lineno, "size line entries must be non-negative")
        if max(n_rows, n_cols, declared) >= INDEX_LIMIT:
            _fail(path, lineno, "dimensions or nnz exceed the 32-bit index limit")

        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        got = 0
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            parts = s.split()
            want = 2 if pattern else 3
            if len(parts) != want:
                _fail(path, lineno, f"entry must have {want} fields")
            try:
                i = int(parts[0])
                j = int(parts[1])
            except ValueError:
                _fail(path, lineno, "entry indices must be integers")
            if not (1 <= i <= n_rows) or not (1 <= j <= n_cols):
                _fail(path, lineno, f"entry ({i}, {j}) out of range")
            if pattern:
                v = 1.0
            else:
                try:
                    v = float(parts[2])
                except ValueError:
                    _fail(path, lineno, f"bad value {parts[2]!r}")
            if symmetric and j > i:
                _fail(path, lineno, "above-diagonal entry in symmetric matrix")
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
            if symmetric and i != j:
                rows.append(j - 1)
                cols.append(i - 1)
                vals.append(v)
            got += 1
        if got != declared:
            _fail(path, lineno, f"declared {declared} entries, found {got}")

    coo = CooMatrix(n_rows, n_cols, np.array(rows), np.array(cols), np.array(vals))
    return coo.to_csr()


def write_matrix_market(path, a: CsrMatrix) -> None:
    """Write CSR as a general real coordinate file; values round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{a.n_rows} {a.n_cols} {a.nnz}\n")
        for r in range(a.n_rows):
            for c, v in zip(a.row_cols(r), a.row_values(r)):
                fh.write(f"{r + 1} {c + 1} {float(v)!r}\n")


def write_dense(path, m: DenseMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(_DENSE_HEADER.pack(DENSE_MAGIC, m.n_rows, m.n_cols, 0))
        fh.write(np.ascontiguousarray(m.data, dtype="<f4").tobytes())


def read_dense(path) -> DenseMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _DENSE_HEADER.size:
        raise ValueError(f"{path}: truncated dense header")
    magic, n_rows, n_cols, _reserved = _DENSE_HEADER.unpack_from(blob)
    if magic != DENSE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _DENSE_HEADER.size + n_rows * n_cols * 4
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_DENSE_HEADER.size)
    return DenseMatrix(n_rows, n_cols, data.reshape(n_rows, n_cols).astype(np.float32))
