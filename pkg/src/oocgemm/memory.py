"""Analytic memory estimators for planning an out-of-core multiply.

All byte quantities are integers. The output estimate is evaluated with exact
rational arithmetic so that hand-checked values do not drift by an ulp and get
bumped by the ceiling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from .errors import InsufficientDeviceMemory
from .sparse import CscMatrix, CsrMatrix, ElementSizes

Number = Union[int, float, Fraction]


@dataclass(frozen=True)
class MatrixStats:
    """Byte-level summary of one operand.

    ``alpha`` is the total byte size of the values array; ``pointer_bytes``
    and ``id_bytes`` are the pointer and index array sizes.
    """

    alpha: int
    sparsity_pct: Number
    pointer_bytes: int = 0
    id_bytes: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 <= self.sparsity_pct <= 100:
            raise ValueError("sparsity_pct must lie in [0, 100]")


@dataclass(frozen=True)
class MemoryBudget:
    device_total: int
    host_total: int = 1 << 40
    element_sizes: ElementSizes = field(default_factory=ElementSizes)

    def __post_init__(self):
        if self.device_total <= 0:
            raise ValueError("device_total must be > 0")
        if self.host_total <= 0:
            raise ValueError("host_total must be > 0")


@dataclass(frozen=True)
class BlockBudget:
    per_array: int  # p
    segment_bytes: int  # M_A = M - M_C - M_B


def matrix_stats(m: Union[CsrMatrix, CscMatrix], sizes: ElementSizes = ElementSizes()) -> MatrixStats:
    total = m.n_rows * m.n_cols
    sparsity = Fraction(100 * (total - m.nnz), total) if total else Fraction(100)
    n_ptr = (m.n_rows if isinstance(m, CsrMatrix) else m.n_cols) + 1
    return MatrixStats(
        alpha=m.nnz * sizes.value_bytes,
        sparsity_pct=sparsity,
        pointer_bytes=n_ptr * sizes.index_bytes,
        id_bytes=m.nnz * sizes.index_bytes,
    )


def estimate_output_memory(a: MatrixStats, b: MatrixStats) -> int:
    """Estimated device bytes for the output C of A @ B.

    ``ceil(3 * aA * dA * (1 + aB / aA + dB))`` with ``d = (100 - s) / 100``.
    An empty A (zero value bytes) yields 0.
    """
    if a.alpha == 0:
        return 0
    alpha_a = Fraction(a.alpha)
    dens_a = (100 - Fraction(a.sparsity_pct)) / 100
    dens_b = (100 - Fraction(b.sparsity_pct)) / 100
    est = 3 * alpha_a * dens_a * (1 + Fraction(b.alpha) / alpha_a + dens_b)
    return math.ceil(est)


def estimate_b_memory(b: MatrixStats) -> int:
    return b.alpha + b.pointer_bytes + b.id_bytes


def block_budget(budget: MemoryBudget, m_c: int, m_b: int) -> BlockBudget:
    """Split what is left of the device after B and C among the three A arrays."""
    free = budget.device_total - m_c - m_b
    if free <= 0:
        raise InsufficientDeviceMemory(
            f"device holds {budget.device_total} bytes but B ({m_b}) and the C estimate ({m_c}) need "
            f"{m_c + m_b}"
        )
    return BlockBudget(per_array=free // 3, segment_bytes=free)


def calc_mem(k: int, q: int, sizes: ElementSizes = ElementSizes()) -> int:
    """Bytes of a CSR segment with ``k`` rows and ``q`` nonzeros."""
    if k < 0 or q < 0:
        raise ValueError("k and q must be non-negative")
    return (k + 1) * sizes.index_bytes + q * sizes.entry_bytes
