from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oocgemm.errors import InsufficientDeviceMemory
from oocgemm.memory import (
    MatrixStats,
    MemoryBudget,
    block_budget,
    calc_mem,
    estimate_b_memory,
    estimate_output_memory,
    matrix_stats,
)
from oocgemm.sparse import ElementSizes, byte_size, csr_from_triplets, csr_to_csc, identity


def test_output_estimate_examples():
    assert estimate_output_memory(MatrixStats(800, 90), MatrixStats(400, 95)) == 372
    assert estimate_output_memory(MatrixStats(0, 100), MatrixStats(400, 95)) == 0
    assert estimate_output_memory(MatrixStats(100, 0), MatrixStats(100, 0)) == 900


def test_output_estimate_rounds_up():
    # 3 * 10 * 0.5 * (1 + 1/10 + 0) = 16.5
    assert estimate_output_memory(MatrixStats(10, 50), MatrixStats(1, 100)) == 17


def test_b_estimate_examples():
    assert estimate_b_memory(MatrixStats(400, 0, 100, 400)) == 900
    assert estimate_b_memory(MatrixStats(0, 100, 0, 0)) == 0
    assert estimate_b_memory(MatrixStats(8, 0, 16, 8)) == 32


def test_b_estimate_matches_byte_size():
    b = csr_to_csc(csr_from_triplets([0, 2, 3], [1, 1, 0], [1.0, 2.0, 3.0], 4, 3))
    for sizes in (ElementSizes(), ElementSizes(4, 8), ElementSizes(4, 4)):
        assert estimate_b_memory(matrix_stats(b, sizes)) == byte_size(b, sizes)


def test_block_budget_examples():
    bb = block_budget(MemoryBudget(2272), 372, 900)
    assert (bb.per_array, bb.segment_bytes) == (333, 1000)
    with pytest.raises(InsufficientDeviceMemory):
        block_budget(MemoryBudget(1272), 372, 900)
    bb = block_budget(MemoryBudget(3), 0, 0)
    assert (bb.per_array, bb.segment_bytes) == (1, 3)


def test_calc_mem_examples():
    assert calc_mem(1, 0) == 16
    assert calc_mem(2, 3) == 72
    assert calc_mem(4, 9, ElementSizes(4, 8)) == 128


def test_matrix_stats_exact_sparsity():
    st_ = matrix_stats(identity(3))
    assert st_.sparsity_pct == Fraction(200, 3)
    assert st_.alpha == 24


def test_invalid_inputs():
    with pytest.raises(ValueError):
        MatrixStats(-1, 0)
    with pytest.raises(ValueError):
        MatrixStats(1, 101)
    with pytest.raises(ValueError):
        MemoryBudget(0)
    with pytest.raises(ValueError):
        ElementSizes(0, 8)


pct = st.integers(0, 100)
alpha = st.integers(1, 10_000)


@settings(max_examples=200, deadline=None)
@given(alpha, alpha, pct, pct, st.integers(1, 100), st.integers(1, 100))
def test_output_estimate_monotone(a_a, a_b, s_a, s_b, step, grow):
    base = estimate_output_memory(MatrixStats(a_a, s_a), MatrixStats(a_b, s_b))
    if s_a + step <= 100:
        assert estimate_output_memory(MatrixStats(a_a, s_a + step), MatrixStats(a_b, s_b)) <= base
    if s_b + step <= 100:
        assert estimate_output_memory(MatrixStats(a_a, s_a), MatrixStats(a_b, s_b + step)) <= base
    assert estimate_output_memory(MatrixStats(a_a + grow, s_a), MatrixStats(a_b, s_b)) >= base
    assert estimate_output_memory(MatrixStats(a_a, s_a), MatrixStats(a_b + grow, s_b)) >= base


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**9), st.integers(0, 10**6), st.integers(0, 10**6))
def test_block_budget_floor(m, m_c, m_b):
    if m <= m_c + m_b:
        with pytest.raises(InsufficientDeviceMemory):
            block_budget(MemoryBudget(m), m_c, m_b)
        return
    bb = block_budget(MemoryBudget(m), m_c, m_b)
    assert 3 * bb.per_array <= m - m_c - m_b < 3 * (bb.per_array + 1)
    assert bb.segment_bytes == m - m_c - m_b


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20), st.integers(0, 60), st.sampled_from([(8, 8), (4, 8), (4, 4), (2, 4)]))
def test_calc_mem_is_csr_footprint(k, q, sz):
    sizes = ElementSizes(*sz)
    rng = np.random.default_rng(k * 100 + q)
    rows = np.sort(rng.integers(0, k, q))
    a = csr_from_triplets(rows, np.arange(q), np.ones(q), k, max(q, 1))
    assert calc_mem(k, q, sizes) == byte_size(a, sizes)
