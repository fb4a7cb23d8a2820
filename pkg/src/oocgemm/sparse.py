"""Compressed sparse containers, conversions and Matrix Market ingestion.

Containers are immutable: the index and value arrays are stored as read-only
numpy arrays in canonical form (indices sorted and unique within each row or
column). Every constructor in this module produces canonical output and
every downstream routine relies on it.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DenseTooLarge,
    IndexOutOfRange,
    InvalidMatrix,
    ParseError,
    UnsupportedFormat,
)

INDEX_DTYPE = np.int64
VALUE_DTYPE = np.float64

DENSE_CAP = 10**8

CSR_MAGIC = b"OOCCSR01"
_HEADER = struct.Struct("<8sQQQ")


@dataclass(frozen=True)
class ElementSizes:
    """Byte widths used by the memory model (not by the arithmetic)."""

    index_bytes: int = 8
    value_bytes: int = 8

    def __post_init__(self):
        if self.index_bytes < 1 or self.value_bytes < 1:
            raise ValueError("element sizes must be >= 1 byte")

    @property
    def entry_bytes(self) -> int:
        return self.index_bytes + self.value_bytes


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr or out.base is not None:
        out = out.copy()
    out.setflags(write=False)
    return out


def _check_compressed(n_major, n_minor, ptr, idx, vals, what):
    if n_major < 0 or n_minor < 0:
        raise InvalidMatrix(f"{what}: negative dimension")
    if ptr.ndim != 1 or len(ptr) != n_major + 1:
        raise InvalidMatrix(f"{what}: pointer array must have length {n_major + 1}")
    if ptr[0] != 0:
        raise InvalidMatrix(f"{what}: pointer array must start at 0")
    if np.any(np.diff(ptr) < 0):
        raise InvalidMatrix(f"{what}: pointer array must be non-decreasing")
    nnz = int(ptr[-1])
    if len(idx) != nnz or len(vals) != nnz:
        raise InvalidMatrix(f"{what}: index/value arrays must have length {nnz}")
    if nnz:
        if idx.min() < 0 or idx.max() >= n_minor:
            raise InvalidMatrix(f"{what}: index out of range [0, {n_minor})")
        # strictly increasing inside every major slice
        step = np.diff(idx)
        starts = np.zeros(nnz, dtype=bool)
        starts[ptr[:-1][ptr[:-1] < nnz]] = True
        if np.any((step <= 0) & ~starts[1:]):
            raise InvalidMatrix(f"{what}: indices must be strictly increasing within each slice")


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "row_ptr", _frozen(self.row_ptr, INDEX_DTYPE))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, INDEX_DTYPE))
        object.__setattr__(self, "values", _frozen(self.values, VALUE_DTYPE))
        _check_compressed(self.n_rows, self.n_cols, self.row_ptr, self.col_idx, self.values, "CSR")

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


@dataclass(frozen=True, eq=False)
class CscMatrix:
    n_rows: int
    n_cols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "col_ptr", _frozen(self.col_ptr, INDEX_DTYPE))
        object.__setattr__(self, "row_idx", _frozen(self.row_idx, INDEX_DTYPE))
        object.__setattr__(self, "values", _frozen(self.values, VALUE_DTYPE))
        _check_compressed(self.n_cols, self.n_rows, self.col_ptr, self.row_idx, self.values, "CSC")

    @property
    def nnz(self) -> int:
        return int(self.col_ptr[-1])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def __eq__(self, other):
        if not isinstance(other, CscMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.col_ptr, other.col_ptr)
            and np.array_equal(self.row_idx, other.row_idx)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"CscMatrix(shape={self.shape}, nnz={self.nnz})"


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major dense matrix used by the verification oracles."""

    n_rows: int
    n_cols: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=VALUE_DTYPE)
        if data.size != self.n_rows * self.n_cols:
            raise InvalidMatrix("dense data length must equal n_rows * n_cols")
        object.__setattr__(self, "data", data.reshape(self.n_rows, self.n_cols))

    @classmethod
    def from_array(cls, arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=VALUE_DTYPE))
        return cls(arr.shape[0], arr.shape[1], arr)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def __eq__(self, other):
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)


def _compress(major, minor, vals, n_major, n_minor):
    """Sort triplets by (major, minor), sum duplicates, drop exact-zero sums.

    Duplicates are summed in their input order so the result is deterministic.
    """
    major = np.asarray(major, dtype=INDEX_DTYPE)
    minor = np.asarray(minor, dtype=INDEX_DTYPE)
    vals = np.asarray(vals, dtype=VALUE_DTYPE)
    if n_major == 0 or n_minor == 0 or len(vals) == 0:
        return np.zeros(n_major + 1, INDEX_DTYPE), np.zeros(0, INDEX_DTYPE), np.zeros(0, VALUE_DTYPE)
    key = major * n_minor + minor
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    group = np.cumsum(first) - 1
    summed = np.bincount(group, weights=vals, minlength=int(group[-1]) + 1)
    ukey = key[first]
    keep = summed != 0.0
    ukey = ukey[keep]
    summed = summed[keep]
    out_major = ukey // n_minor
    out_minor = ukey % n_minor
    ptr = np.zeros(n_major + 1, INDEX_DTYPE)
    np.cumsum(np.bincount(out_major, minlength=n_major), out=ptr[1:])
    return ptr, out_minor.astype(INDEX_DTYPE), summed.astype(VALUE_DTYPE)


def csr_from_triplets(rows, cols, vals, n_rows, n_cols) -> CsrMatrix:
    """Build a canonical CSR matrix; duplicates are summed, exact zeros dropped."""
    rows = np.asarray(rows, dtype=INDEX_DTYPE).ravel()
    cols = np.asarray(cols, dtype=INDEX_DTYPE).ravel()
    vals = np.asarray(vals, dtype=VALUE_DTYPE).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise ValueError("rows, cols and vals must have equal length")
    if len(rows):
        if rows.min() < 0 or rows.max() >= n_rows:
            raise IndexOutOfRange(f"row index outside [0, {n_rows})")
        if cols.min() < 0 or cols.max() >= n_cols:
            raise IndexOutOfRange(f"column index outside [0, {n_cols})")
    ptr, idx, v = _compress(rows, cols, vals, n_rows, n_cols)
    return CsrMatrix(n_rows, n_cols, ptr, idx, v)


def csr_to_triplets(a: CsrMatrix):
    rows = np.repeat(np.arange(a.n_rows, dtype=INDEX_DTYPE), a.row_nnz())
    return rows, a.col_idx.copy(), a.values.copy()


def _transpose_compressed(n_major, n_minor, ptr, idx, vals):
    # stable sort by minor index keeps major indices ascending inside each slice
    major = np.repeat(np.arange(n_major, dtype=INDEX_DTYPE), np.diff(ptr))
    order = np.argsort(idx, kind="stable")
    new_ptr = np.zeros(n_minor + 1, INDEX_DTYPE)
    np.cumsum(np.bincount(idx, minlength=n_minor), out=new_ptr[1:])
    return new_ptr, major[order], vals[order]


def csr_to_csc(a: CsrMatrix) -> CscMatrix:
    ptr, idx, vals = _transpose_compressed(a.n_rows, a.n_cols, a.row_ptr, a.col_idx, a.values)
    return CscMatrix(a.n_rows, a.n_cols, ptr, idx, vals)


def csc_to_csr(b: CscMatrix) -> CsrMatrix:
    ptr, idx, vals = _transpose_compressed(b.n_cols, b.n_rows, b.col_ptr, b.row_idx, b.values)
    return CsrMatrix(b.n_rows, b.n_cols, ptr, idx, vals)


def transpose(a: CsrMatrix) -> CsrMatrix:
    ptr, idx, vals = _transpose_compressed(a.n_rows, a.n_cols, a.row_ptr, a.col_idx, a.values)
    return CsrMatrix(a.n_cols, a.n_rows, ptr, idx, vals)


def identity(n: int) -> CsrMatrix:
    return CsrMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n))


def to_dense(a, cap: int = DENSE_CAP) -> DenseMatrix:
    """Densify a CSR or CSC matrix; refuses anything above ``cap`` elements."""
    if a.n_rows * a.n_cols > cap:
        raise DenseTooLarge(f"{a.n_rows}x{a.n_cols} exceeds the dense cap of {cap} elements")
    out = np.zeros((a.n_rows, a.n_cols), dtype=VALUE_DTYPE)
    if isinstance(a, CsrMatrix):
        rows = np.repeat(np.arange(a.n_rows), np.diff(a.row_ptr))
        out[rows, a.col_idx] = a.values
    elif isinstance(a, CscMatrix):
        cols = np.repeat(np.arange(a.n_cols), np.diff(a.col_ptr))
        out[a.row_idx, cols] = a.values
    else:
        raise TypeError(f"cannot densify {type(a).__name__}")
    return DenseMatrix(a.n_rows, a.n_cols, out)


def from_dense(d) -> CsrMatrix:
    arr = d.data if isinstance(d, DenseMatrix) else np.atleast_2d(np.asarray(d, dtype=VALUE_DTYPE))
    rows, cols = np.nonzero(arr)
    return csr_from_triplets(rows, cols, arr[rows, cols], arr.shape[0], arr.shape[1])


def byte_size(a, sizes: ElementSizes = ElementSizes()) -> int:
    """Modelled storage footprint: pointer array + index array + value array."""
    if isinstance(a, CsrMatrix):
        n_ptr = a.n_rows + 1
    elif isinstance(a, CscMatrix):
        n_ptr = a.n_cols + 1
    else:
        raise TypeError(f"byte_size needs a CsrMatrix or CscMatrix, got {type(a).__name__}")
    return n_ptr * sizes.index_bytes + a.nnz * (sizes.index_bytes + sizes.value_bytes)


# --------------------------------------------------------------------------
# Matrix Market
# --------------------------------------------------------------------------

_FIELDS = {"real", "integer", "pattern", "double"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric"}


def _parse_header(line, lineno):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise ParseError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", lineno)
    obj, fmt, field, sym = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise UnsupportedFormat(f"object type {obj!r} is not supported")
    if fmt != "coordinate":
        raise UnsupportedFormat(f"format {fmt!r} is not supported (coordinate only)")
    if field == "complex" or sym == "hermitian":
        raise UnsupportedFormat("complex-valued matrices are not supported")
    if field not in _FIELDS:
        raise ParseError(f"unknown field {field!r}", lineno)
    if sym not in _SYMMETRIES:
        raise ParseError(f"unknown symmetry {sym!r}", lineno)
    return field, sym


def parse_matrix_market(text: str) -> CsrMatrix:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    field, sym = _parse_header(lines[0], 1)
    pattern = field == "pattern"

    size = None
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        tok = line.split()
        if size is None:
            if len(tok) != 3:
                raise ParseError("size line must hold 'rows cols nnz'", lineno)
            try:
                size = tuple(int(t) for t in tok)
            except ValueError:
                raise ParseError("non-integer size line", lineno) from None
            if min(size) < 0:
                raise ParseError("negative size", lineno)
            continue
        want = 2 if pattern else 3
        if len(tok) < want:
            raise ParseError(f"expected {want} fields, found {len(tok)}", lineno)
        if len(tok) > want:
            raise ParseError(f"trailing data: expected {want} fields, found {len(tok)}", lineno)
        try:
            i, j = int(tok[0]), int(tok[1])
            v = 1.0 if pattern else float(tok[2])
        except ValueError:
            raise ParseError(f"malformed entry {line!r}", lineno) from None
        n_rows, n_cols, _ = size
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise ParseError(f"entry ({i}, {j}) outside declared {n_rows}x{n_cols}", lineno)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if len(rows) > size[2]:
            raise ParseError(f"more entries than the declared {size[2]}", lineno)

    if size is None:
        raise ParseError("missing size line", len(lines))
    n_rows, n_cols, nnz = size
    if len(rows) != nnz:
        raise ParseError(f"declared {nnz} entries, found {len(rows)}", len(lines))

    r = np.asarray(rows, dtype=INDEX_DTYPE)
    c = np.asarray(cols, dtype=INDEX_DTYPE)
    v = np.asarray(vals, dtype=VALUE_DTYPE)
    if sym != "general":
        off = r != c
        mirror = -v[off] if sym == "skew-symmetric" else v[off]
        r, c, v = np.concatenate([r, c[off]]), np.concatenate([c, r[off]]), np.concatenate([v, mirror])
    return csr_from_triplets(r, c, v, n_rows, n_cols)


def load_matrix_market(path) -> CsrMatrix:
    return parse_matrix_market(Path(path).read_text())


def write_matrix_market(path, a: CsrMatrix, comment: str | None = None):
    rows, cols, vals = csr_to_triplets(a)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            fh.write(f"% {comment}\n")
        fh.write(f"{a.n_rows} {a.n_cols} {a.nnz}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


# --------------------------------------------------------------------------
# Binary container: fixed header then row_ptr, col_idx (u64) and values (f64)
# --------------------------------------------------------------------------

def csr_to_bytes(a: CsrMatrix) -> bytes:
    head = _HEADER.pack(CSR_MAGIC, a.n_rows, a.n_cols, a.nnz)
    return b"".join(
        [
            head,
            a.row_ptr.astype("<u8").tobytes(),
            a.col_idx.astype("<u8").tobytes(),
            a.values.astype("<f8").tobytes(),
        ]
    )


def csr_from_bytes(buf: bytes) -> CsrMatrix:
    if len(buf) < _HEADER.size:
        raise ParseError("truncated container header")
    magic, n_rows, n_cols, nnz = _HEADER.unpack_from(buf, 0)
    if magic != CSR_MAGIC:
        raise ParseError("not a CSR container (bad magic)")
    expect = _HEADER.size + 8 * (n_rows + 1) + 16 * nnz
    if len(buf) != expect:
        raise ParseError(f"container length {len(buf)} != expected {expect}")
    off = _HEADER.size
    ptr = np.frombuffer(buf, "<u8", n_rows + 1, off)
    off += 8 * (n_rows + 1)
    idx = np.frombuffer(buf, "<u8", nnz, off)
    off += 8 * nnz
    vals = np.frombuffer(buf, "<f8", nnz, off)
    try:
        return CsrMatrix(n_rows, n_cols, ptr.astype(INDEX_DTYPE), idx.astype(INDEX_DTYPE), vals)
    except InvalidMatrix as exc:
        raise ParseError(f"container holds a non-canonical matrix: {exc}") from None


def save_csr(path, a: CsrMatrix):
    Path(path).write_bytes(csr_to_bytes(a))


def load_csr(path) -> CsrMatrix:
    return csr_from_bytes(Path(path).read_bytes())


def load_matrix(path) -> CsrMatrix:
    """Load either a binary CSR container or a Matrix Market file."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(CSR_MAGIC))
    if head == CSR_MAGIC:
        return load_csr(path)
    return load_matrix_market(path)
