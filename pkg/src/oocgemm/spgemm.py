"""Row-block SpGEMM against a CSC right operand, plus a dense oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .kernels import DEFAULT_TILE, spgemm_arrays
from .partition import RobwSegment, concat_segments, row_block
from .sparse import CscMatrix, CsrMatrix, DenseMatrix


@dataclass(frozen=True, eq=False)
class CsrBlockResult:
    start_row: int
    end_row: int
    block: CsrMatrix
    flops: int
    row_flops: np.ndarray
    allocated_nnz: int
    produced_nnz: int

    def as_segment(self, seg_index=0) -> RobwSegment:
        b = self.block
        return RobwSegment(seg_index, self.start_row, self.end_row, b.row_ptr, b.col_idx, b.values, 0, b.n_cols)


def spgemm_block(a_seg: RobwSegment, b: CscMatrix, tile: int = DEFAULT_TILE, backend=None) -> CsrBlockResult:
    """Compute rows ``[start_row, end_row)`` of C = A @ B for one segment.

    A symbolic pass sizes the output exactly before the numeric pass fills it.
    Entries whose products cancel to 0.0 are kept as structural nonzeros.
    """
    if a_seg.n_cols and a_seg.n_cols != b.n_rows:
        raise DimensionMismatch(f"segment has {a_seg.n_cols} columns but B has {b.n_rows} rows")
    if a_seg.nnz and int(a_seg.col_idx.max()) >= b.n_rows:
        raise DimensionMismatch(f"segment references column {int(a_seg.col_idx.max())}, B has {b.n_rows} rows")
    c_ptr, c_idx, c_val, row_flops, allocated, produced = spgemm_arrays(
        a_seg.row_ptr_local, a_seg.col_idx, a_seg.values,
        b.col_ptr, b.row_idx, b.values, b.n_rows, tile=tile, backend=backend,
    )
    block = CsrMatrix(a_seg.n_rows, b.n_cols, c_ptr, c_idx, c_val)
    return CsrBlockResult(
        a_seg.start_row, a_seg.end_row, block, int(row_flops.sum()), row_flops, allocated, produced
    )


def spgemm_full(a: CsrMatrix, b: CscMatrix, tile: int = DEFAULT_TILE, backend=None) -> CsrMatrix:
    """In-core reference product; equal bit for bit to any row-blocked run."""
    if a.n_cols != b.n_rows:
        raise DimensionMismatch(f"A is {a.shape}, B is {b.shape}")
    return spgemm_block(row_block(a, 0, a.n_rows), b, tile=tile, backend=backend).block


def stack_blocks(results, n_rows: int, n_cols: int) -> CsrMatrix:
    return concat_segments([r.as_segment(i) for i, r in enumerate(results)], n_rows, n_cols)


def dense_oracle(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    """Textbook product accumulated in ascending k, one rank-1 update at a time.

    Each ``C[i, j]`` is built as ``((0 + a_i0 b_0j) + a_i1 b_1j) + ...`` exactly
    like the scalar triple loop, just vectorised over (i, j).
    """
    if a.n_cols != b.n_rows:
        raise DimensionMismatch(f"A is {a.shape}, B is {b.shape}")
    out = np.zeros((a.n_rows, b.n_cols))
    for k in range(a.n_cols):
        out += np.multiply.outer(a.data[:, k], b.data[k, :])
    return DenseMatrix(a.n_rows, b.n_cols, out)


def structural_products(a: DenseMatrix, b: DenseMatrix) -> int:
    """Number of scalar products with both operands nonzero."""
    return int(((a.data != 0).astype(np.int64) @ (b.data != 0).astype(np.int64)).sum())
