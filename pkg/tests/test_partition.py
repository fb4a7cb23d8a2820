import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oocgemm.errors import NonAdjacentFragments, ParseError, RowTooLarge
from oocgemm.memory import calc_mem
from oocgemm.partition import (
    Fragment,
    carried_fragment,
    concat_segments,
    deserialize_segment,
    maxmemory_partition,
    merge_partial,
    robw_partition,
    serialize_segment,
    stream_bytes,
)
from oocgemm.sparse import ElementSizes, csr_from_triplets, identity

from conftest import rand_csr


def _rows(nnz_per_row, n_cols=None):
    nnz_per_row = list(nnz_per_row)
    n_cols = n_cols or max([1, *nnz_per_row])
    rows = np.repeat(np.arange(len(nnz_per_row)), nnz_per_row)
    cols = np.concatenate([np.arange(k) for k in nnz_per_row]) if nnz_per_row else np.zeros(0, int)
    return csr_from_triplets(rows, cols, np.ones(len(rows)), len(nnz_per_row), n_cols)


def test_hand_traced_example(alg1_matrix, backend):
    segs = robw_partition(alg1_matrix, 120, backend=backend)
    assert [(s.start_row, s.end_row, s.byte_size) for s in segs] == [(0, 2, 104), (2, 4, 88)]
    assert calc_mem(3, 6) == 128 > 120
    assert concat_segments(segs, 4, 4) == alg1_matrix


def test_single_segment_when_budget_dominates(alg1_matrix, backend):
    segs = robw_partition(alg1_matrix, calc_mem(4, 9), backend=backend)
    assert len(segs) == 1 and segs[0].n_rows == 4


def test_row_too_large(backend):
    a = _rows([1, 10, 1])
    with pytest.raises(RowTooLarge) as exc:
        robw_partition(a, calc_mem(1, 9), backend=backend)
    assert exc.value.row == 1


def test_empty_rows_cost_a_pointer(backend):
    a = _rows([0, 0, 0, 0])
    segs = robw_partition(a, 24, backend=backend)
    # calc_mem(k, 0) = 8(k+1) <= 24 admits 2 rows per segment
    assert [(s.start_row, s.end_row) for s in segs] == [(0, 2), (2, 4)]


def test_empty_matrix(backend):
    assert robw_partition(_rows([]), 16, backend=backend) == []


@settings(max_examples=120, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=1, max_size=40), st.integers(0, 400),
       st.sampled_from([(8, 8), (4, 8), (4, 4)]))
def test_robw_properties(nnz, slack, sz):
    sizes = ElementSizes(*sz)
    a = _rows(nnz)
    m_a = calc_mem(1, max(nnz), sizes) + slack
    outs = {b: robw_partition(a, m_a, sizes, backend=b) for b in ("numpy", "numba")}
    assert outs["numpy"] == outs["numba"]
    segs = outs["numpy"]
    assert concat_segments(segs, a.n_rows, a.n_cols) == a
    for i, s in enumerate(segs):
        assert s.seg_index == i
        assert s.byte_size == calc_mem(s.n_rows, s.nnz, sizes) <= m_a
        if i + 1 < len(segs):
            # maximality: one more row would not fit
            extra = nnz[s.end_row]
            assert calc_mem(s.n_rows + 1, s.nnz + extra, sizes) > m_a
            assert segs[i + 1].start_row == s.end_row


def test_segment_container_round_trip(alg1_matrix):
    for sizes in (ElementSizes(), ElementSizes(4, 8), ElementSizes(4, 4)):
        for s in robw_partition(alg1_matrix, 120, sizes):
            buf = serialize_segment(s, sizes)
            assert len(buf) == 4 * sizes.index_bytes + s.byte_size
            assert deserialize_segment(buf, sizes, 4) == s
    with pytest.raises(ParseError):
        deserialize_segment(buf[:-1], sizes)


# --------------------------------------------------------------------------
# MaxMemory baseline
# --------------------------------------------------------------------------

def test_raw_split_hand_example():
    a = _rows([3, 3])  # two rows of 48 stream bytes each, 96 in total
    segs = maxmemory_partition(a, 64)
    assert [(s.byte_start, s.byte_end) for s in segs] == [(0, 64), (64, 96)]
    frag = segs[0].trailing_partial
    assert (frag.row, frag.byte_start, frag.byte_end, frag.nbytes) == (1, 48, 64, 16)
    assert (segs[0].row_start, segs[0].row_end) == (0, 1)
    assert (segs[1].row_start, segs[1].row_end) == (1, 2)
    assert not segs[1].usable
    merged = merge_partial(frag, segs[1])
    assert merged.nbytes == segs[1].nbytes + 16
    assert merged.merge_bytes == 16 and merged.usable


def test_raw_split_trivial_cases():
    a = _rows([3, 3])
    segs = maxmemory_partition(a, 200)
    assert len(segs) == 1 and segs[0].trailing_partial is None
    aligned = maxmemory_partition(a, 48)
    assert all(s.trailing_partial is None for s in aligned)
    with pytest.raises(ValueError):
        maxmemory_partition(a, 0)


def test_merge_partial_errors_and_empty():
    a = _rows([3, 3, 3])
    segs = maxmemory_partition(a, 40)
    unchanged = merge_partial(None, segs[1])
    assert unchanged.merge_bytes == 0 and unchanged.nbytes == segs[1].nbytes
    empty = Fragment(0, 40, 40, 0)
    assert merge_partial(empty, segs[1]).merge_bytes == 0
    with pytest.raises(NonAdjacentFragments):
        merge_partial(segs[0].trailing_partial, segs[2])


def _merge_bytes(a, m_a, sizes=ElementSizes()):
    total = 0
    carry = None
    for raw in maxmemory_partition(a, m_a, sizes):
        seg = merge_partial(carry, raw)
        total += seg.merge_bytes
        carry = carried_fragment(seg)
    return total


def test_long_row_carries_whole_prefix():
    a = _rows([10])  # 160 bytes, cuts at 48, 96, 144
    assert _merge_bytes(a, 48) == 48 + 96 + 144


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=30), st.integers(1, 64))
def test_raw_segments_tile_the_stream(nnz, m_a):
    a = _rows(nnz)
    segs = maxmemory_partition(a, m_a)
    total = stream_bytes(a)
    assert segs[0].byte_start == 0 and segs[-1].byte_end == total
    for s, t in zip(segs, segs[1:]):
        assert s.byte_end == t.byte_start
        assert t.row_start == s.row_end
    assert segs[0].row_start == 0 and segs[-1].row_end == a.n_rows
    # each cut lands strictly inside a row exactly when a fragment is recorded
    ends = np.cumsum(np.array(nnz) * 16)
    starts = ends - np.array(nnz) * 16
    for s in segs[:-1]:
        inside = np.any((starts < s.byte_end) & (s.byte_end < ends))
        assert inside == (s.trailing_partial is not None)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=30), st.integers(1, 40), st.integers(1, 4))
def test_merge_bytes_monotone_for_nested_budgets(nnz, m_a, levels):
    a = _rows(nnz)
    # halving the budget keeps every old cut point and adds new ones
    prev = _merge_bytes(a, m_a * 2**levels)
    for j in range(levels - 1, -1, -1):
        cur = _merge_bytes(a, m_a * 2**j)
        assert cur >= prev
        prev = cur


def test_merge_bytes_not_monotone_across_unrelated_budgets():
    # rows of 16 bytes: 32-byte cuts are row aligned, 40-byte cuts are not
    a = identity(8)
    assert _merge_bytes(a, 40) > 0
    assert _merge_bytes(a, 32) == 0


def test_robw_never_merges():
    a = rand_csr(np.random.default_rng(3), 60, 60, 0.1)
    segs = robw_partition(a, 400)
    assert concat_segments(segs, 60, 60) == a
