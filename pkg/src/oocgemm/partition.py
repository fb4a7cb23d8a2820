"""Splitting a CSR operand into device-sized pieces.

Two strategies live here:

* ``robw_partition`` -- greedy row-block-wise segments. Every segment holds
  whole rows only, so nothing has to be merged after it reaches the device.
* ``maxmemory_partition`` -- the naive baseline. The paired (column index,
  value) byte stream is cut at fixed byte offsets regardless of row
  boundaries; any row straddling a cut leaves a partial fragment that must
  travel back to the host and be merged into the next segment.

Segments serialise to a small little-endian container for the storage tier.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import NonAdjacentFragments, ParseError, RowTooLarge
from .kernels import robw_bounds
from .memory import calc_mem
from .sparse import CsrMatrix, ElementSizes

_INT_CODES = {1: "B", 2: "H", 4: "I", 8: "Q"}
_FLOAT_DTYPES = {4: "<f4", 8: "<f8"}


@dataclass(frozen=True, eq=False)
class RobwSegment:
    seg_index: int
    start_row: int
    end_row: int
    row_ptr_local: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    byte_size: int
    n_cols: int = 0

    @property
    def n_rows(self) -> int:
        return self.end_row - self.start_row

    @property
    def nnz(self) -> int:
        return int(self.row_ptr_local[-1])

    def __eq__(self, other):
        if not isinstance(other, RobwSegment):
            return NotImplemented
        return (
            (self.seg_index, self.start_row, self.end_row, self.byte_size, self.n_cols)
            == (other.seg_index, other.start_row, other.end_row, other.byte_size, other.n_cols)
            and np.array_equal(self.row_ptr_local, other.row_ptr_local)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )


def row_block(a: CsrMatrix, start: int, end: int, seg_index: int = 0,
              sizes: ElementSizes = ElementSizes()) -> RobwSegment:
    """Copy rows ``[start, end)`` of ``a`` into a rebased segment."""
    lo, hi = int(a.row_ptr[start]), int(a.row_ptr[end])
    ptr = a.row_ptr[start : end + 1] - lo
    return RobwSegment(
        seg_index=seg_index,
        start_row=start,
        end_row=end,
        row_ptr_local=ptr,
        col_idx=a.col_idx[lo:hi].copy(),
        values=a.values[lo:hi].copy(),
        byte_size=calc_mem(end - start, hi - lo, sizes),
        n_cols=a.n_cols,
    )


def robw_partition(a: CsrMatrix, m_a: int, sizes: ElementSizes = ElementSizes(),
                   backend=None) -> List[RobwSegment]:
    """Greedy row-block partition of ``a`` under a per-segment byte budget.

    Each segment takes the longest run of remaining rows whose CSR footprint
    (``calc_mem``) stays within ``m_a``. Empty rows cost one pointer each.

    Raises:
        RowTooLarge: if some single row does not fit in ``m_a`` on its own.
    """
    if a.n_rows == 0:
        return []
    bounds = robw_bounds(a.row_ptr, m_a, sizes.index_bytes, sizes.entry_bytes, backend=backend)
    return [row_block(a, int(s), int(e), p, sizes) for p, (s, e) in enumerate(zip(bounds[:-1], bounds[1:]))]


def concat_segments(segments, n_rows: int, n_cols: int) -> CsrMatrix:
    """Undo the pointer rebasing and stitch segments back into one matrix."""
    ptr = [np.zeros(1, np.int64)]
    idx, vals = [], []
    offset = 0
    expect = 0
    for seg in segments:
        if seg.start_row != expect:
            raise ValueError(f"segment {seg.seg_index} starts at row {seg.start_row}, expected {expect}")
        ptr.append(seg.row_ptr_local[1:] + offset)
        idx.append(seg.col_idx)
        vals.append(seg.values)
        offset += seg.nnz
        expect = seg.end_row
    if expect != n_rows:
        raise ValueError(f"segments cover {expect} rows, matrix has {n_rows}")
    return CsrMatrix(
        n_rows,
        n_cols,
        np.concatenate(ptr),
        np.concatenate(idx) if idx else np.zeros(0, np.int64),
        np.concatenate(vals) if vals else np.zeros(0),
    )


# --------------------------------------------------------------------------
# MaxMemory baseline
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Fragment:
    """Bytes ``[byte_start, byte_end)`` of ``row`` that ended a raw segment."""

    row: int
    byte_start: int
    byte_end: int
    source_seg: int

    @property
    def nbytes(self) -> int:
        return self.byte_end - self.byte_start


@dataclass(frozen=True)
class RawSegment:
    """A byte range of the (column index, value) stream.

    ``row_start``/``row_end`` are the rows that become complete once this
    segment is merged with the previous segment's trailing fragment.
    """

    seg_index: int
    byte_start: int
    byte_end: int
    row_start: int
    row_end: int
    leading_partial: Optional[Fragment] = None
    trailing_partial: Optional[Fragment] = None
    merge_bytes: int = 0

    @property
    def nbytes(self) -> int:
        lead = self.leading_partial.nbytes if self.leading_partial else 0
        return lead + self.byte_end - self.byte_start

    @property
    def usable(self) -> bool:
        """True when no fragment is still owed by the previous segment."""
        return self.merge_pending is None

    merge_pending: Optional[int] = field(default=None, compare=False)


def stream_bytes(a: CsrMatrix, sizes: ElementSizes = ElementSizes()) -> int:
    return a.nnz * sizes.entry_bytes


def maxmemory_partition(a: CsrMatrix, m_a: int, sizes: ElementSizes = ElementSizes()) -> List[RawSegment]:
    """Cut the entry stream of ``a`` every ``m_a`` bytes.

    Row ``r`` is owned by the first segment whose end offset reaches the end
    of the row. A row cut by a segment end produces a trailing fragment from
    the row start (or the segment start, if the row began earlier) to the cut.
    """
    if m_a <= 0:
        raise ValueError("m_a must be > 0")
    total = stream_bytes(a, sizes)
    n_seg = max(1, -(-total // m_a))
    ends = np.minimum(np.arange(1, n_seg + 1, dtype=np.int64) * m_a, total)
    row_start_b = a.row_ptr[:-1] * sizes.entry_bytes
    row_end_b = a.row_ptr[1:] * sizes.entry_bytes
    # owner of row r: first segment s with ends[s] >= row_end_b[r]
    owner = np.searchsorted(ends, row_end_b, side="left")
    first_row = np.searchsorted(owner, np.arange(n_seg), side="left")
    last_row = np.searchsorted(owner, np.arange(n_seg), side="right")

    segs = []
    for s in range(n_seg):
        lo = s * m_a
        hi = int(ends[s])
        trailing = None
        if s + 1 < n_seg:
            # the row containing byte `hi` strictly inside it
            r = int(np.searchsorted(row_end_b, hi, side="right"))
            if r < a.n_rows and row_start_b[r] < hi < row_end_b[r]:
                trailing = Fragment(r, max(int(row_start_b[r]), lo), hi, s)
        segs.append(
            RawSegment(
                seg_index=s,
                byte_start=lo,
                byte_end=hi,
                row_start=int(first_row[s]),
                row_end=int(last_row[s]),
                trailing_partial=trailing,
                merge_pending=None,
            )
        )
    # a segment owes a merge when its predecessor left a fragment behind
    for s in range(1, n_seg):
        if segs[s - 1].trailing_partial is not None:
            segs[s] = replace(segs[s], merge_pending=s - 1)
    return segs


def merge_partial(prev_trailing: Optional[Fragment], nxt: RawSegment) -> RawSegment:
    """Prepend a carried fragment to the next raw segment.

    The fragment may itself contain an earlier carried prefix of the same row,
    so repeated merges of a long row accumulate. ``merge_bytes`` on the result
    counts the fragment bytes re-staged through the host.
    """
    if prev_trailing is None or prev_trailing.nbytes == 0:
        if prev_trailing is not None and prev_trailing.byte_end != nxt.byte_start:
            raise NonAdjacentFragments("empty fragment does not touch the next segment")
        return replace(nxt, merge_pending=None)
    if prev_trailing.byte_end != nxt.byte_start or prev_trailing.source_seg + 1 != nxt.seg_index:
        raise NonAdjacentFragments(
            f"fragment of segment {prev_trailing.source_seg} ending at byte {prev_trailing.byte_end} "
            f"cannot merge into segment {nxt.seg_index} starting at byte {nxt.byte_start}"
        )
    return replace(
        nxt,
        leading_partial=prev_trailing,
        merge_bytes=nxt.merge_bytes + prev_trailing.nbytes,
        merge_pending=None,
    )


def carried_fragment(merged: RawSegment) -> Optional[Fragment]:
    """The fragment to send back after processing an already merged segment.

    When the trailing row began inside the carried prefix, the returned
    fragment starts at the row start rather than the raw segment start.
    """
    t = merged.trailing_partial
    if t is None:
        return None
    lead = merged.leading_partial
    if lead is not None and lead.row == t.row:
        return Fragment(t.row, lead.byte_start, t.byte_end, t.source_seg)
    return t


# --------------------------------------------------------------------------
# Storage container
# --------------------------------------------------------------------------

def _int_fmt(sizes: ElementSizes):
    try:
        return _INT_CODES[sizes.index_bytes]
    except KeyError:
        raise ValueError(f"cannot serialise {sizes.index_bytes}-byte indices") from None


def serialize_segment(seg: RobwSegment, sizes: ElementSizes = ElementSizes()) -> bytes:
    """Header (seg_index, start_row, end_row, nnz) then row_ptr, col_idx, values."""
    code = _int_fmt(sizes)
    if sizes.value_bytes not in _FLOAT_DTYPES:
        raise ValueError(f"cannot serialise {sizes.value_bytes}-byte values")
    idt = f"<u{sizes.index_bytes}"
    head = struct.pack(f"<4{code}", seg.seg_index, seg.start_row, seg.end_row, seg.nnz)
    return b"".join(
        [
            head,
            seg.row_ptr_local.astype(idt).tobytes(),
            seg.col_idx.astype(idt).tobytes(),
            seg.values.astype(_FLOAT_DTYPES[sizes.value_bytes]).tobytes(),
        ]
    )


def deserialize_segment(buf: bytes, sizes: ElementSizes = ElementSizes(), n_cols: int = 0) -> RobwSegment:
    code = _int_fmt(sizes)
    head = struct.Struct(f"<4{code}")
    if len(buf) < head.size:
        raise ParseError("truncated segment header")
    seg_index, start, end, nnz = head.unpack_from(buf, 0)
    k = end - start
    if len(buf) != head.size + calc_mem(k, nnz, sizes):
        raise ParseError("segment container length does not match its header")
    idt = f"<u{sizes.index_bytes}"
    off = head.size
    ptr = np.frombuffer(buf, idt, k + 1, off).astype(np.int64)
    off += (k + 1) * sizes.index_bytes
    idx = np.frombuffer(buf, idt, nnz, off).astype(np.int64)
    off += nnz * sizes.index_bytes
    vals = np.frombuffer(buf, _FLOAT_DTYPES[sizes.value_bytes], nnz, off).astype(np.float64)
    return RobwSegment(seg_index, start, end, ptr, idx, vals, calc_mem(k, nnz, sizes), n_cols)
