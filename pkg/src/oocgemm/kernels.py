"""Hot loops, each with a numba kernel and a vectorised numpy twin.

The two paths are written independently but are required to agree bit for
bit: every floating-point sum is accumulated from 0.0 in ascending inner
index order in both. ``backend=None`` picks the default chosen by
``OOCGEMM_DISABLE_NUMBA`` (see ``_jit``).
"""
from __future__ import annotations

import numpy as np

from ._jit import njit, resolve_backend
from .errors import RowTooLarge

DEFAULT_TILE = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


# --------------------------------------------------------------------------
# SpGEMM: CSR rows x CSC columns, two-pass
#
# The numba path regroups B by row once, then walks output columns in tiles
# of ``tile``: for each row of A it scatters into a tile-wide accumulator and
# a per-entry cursor remembers where each B row left off for the next tile.
# --------------------------------------------------------------------------

@njit(nogil=True)
def _csc_to_rows_nb(b_ptr, b_idx, b_val, n_inner):
    n_cols = len(b_ptr) - 1
    r_ptr = np.zeros(n_inner + 1, np.int64)
    for q in range(len(b_idx)):
        r_ptr[b_idx[q] + 1] += 1
    for k in range(n_inner):
        r_ptr[k + 1] += r_ptr[k]
    fill = r_ptr[:-1].copy()
    r_col = np.empty(len(b_idx), np.int64)
    r_val = np.empty(len(b_idx), np.float64)
    # walking columns in order leaves every row's columns sorted
    for j in range(n_cols):
        for q in range(b_ptr[j], b_ptr[j + 1]):
            k = b_idx[q]
            r_col[fill[k]] = j
            r_val[fill[k]] = b_val[q]
            fill[k] += 1
    return r_ptr, r_col, r_val


@njit(nogil=True)
def _symbolic_nb(a_ptr, a_idx, r_ptr, r_col, n_cols, tile):
    n_rows = len(a_ptr) - 1
    counts = np.zeros(n_rows, np.int64)
    flops = np.zeros(n_rows, np.int64)
    cur = np.empty(len(a_idx), np.int64)
    for p in range(len(a_idx)):
        cur[p] = r_ptr[a_idx[p]]
    stamp = np.full(tile, -1, np.int64)
    for j0 in range(0, n_cols, tile):
        j1 = min(j0 + tile, n_cols)
        for i in range(n_rows):
            tag = i * n_cols + j0
            for p in range(a_ptr[i], a_ptr[i + 1]):
                q = cur[p]
                q1 = r_ptr[a_idx[p] + 1]
                while q < q1 and r_col[q] < j1:
                    t = r_col[q] - j0
                    if stamp[t] != tag:
                        stamp[t] = tag
                        counts[i] += 1
                    flops[i] += 1
                    q += 1
                cur[p] = q
    return counts, flops


@njit(nogil=True)
def _numeric_nb(a_ptr, a_idx, a_val, r_ptr, r_col, r_val, n_cols, c_ptr, tile):
    n_rows = len(a_ptr) - 1
    nnz = c_ptr[n_rows]
    c_idx = np.empty(nnz, np.int64)
    c_val = np.empty(nnz, np.float64)
    out = c_ptr[:-1].copy()
    cur = np.empty(len(a_idx), np.int64)
    for p in range(len(a_idx)):
        cur[p] = r_ptr[a_idx[p]]
    acc = np.zeros(tile, np.float64)
    live = np.zeros(tile, np.bool_)
    touched = np.empty(tile, np.int64)
    for j0 in range(0, n_cols, tile):
        j1 = min(j0 + tile, n_cols)
        for i in range(n_rows):
            nt = 0
            # A entries in ascending inner index, so every acc[t] is summed
            # from 0.0 in ascending k
            for p in range(a_ptr[i], a_ptr[i + 1]):
                v = a_val[p]
                q = cur[p]
                q1 = r_ptr[a_idx[p] + 1]
                while q < q1 and r_col[q] < j1:
                    t = r_col[q] - j0
                    if not live[t]:
                        live[t] = True
                        acc[t] = 0.0
                        touched[nt] = t
                        nt += 1
                    acc[t] += v * r_val[q]
                    q += 1
                cur[p] = q
            cols = np.sort(touched[:nt])
            for u in range(nt):
                t = cols[u]
                c_idx[out[i]] = t + j0
                c_val[out[i]] = acc[t]
                out[i] += 1
                live[t] = False
    produced = 0
    for i in range(n_rows):
        produced += out[i] - c_ptr[i]
    return c_idx, c_val, produced


def _spgemm_numba(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, n_inner, tile):
    n_cols = len(b_ptr) - 1
    r_ptr, r_col, r_val = _csc_to_rows_nb(b_ptr, b_idx, b_val, n_inner)
    tile = max(1, min(tile, n_cols))
    counts, flops = _symbolic_nb(a_ptr, a_idx, r_ptr, r_col, n_cols, tile)
    c_ptr = np.zeros(len(counts) + 1, np.int64)
    np.cumsum(counts, out=c_ptr[1:])
    c_idx, c_val, produced = _numeric_nb(a_ptr, a_idx, a_val, r_ptr, r_col, r_val, n_cols, c_ptr, tile)
    return c_ptr, c_idx, c_val, flops, int(c_ptr[-1]), int(produced)


def _csc_as_rows(b_ptr, b_idx, b_val, n_inner):
    """Row-major view of a CSC operand (stable, so columns stay sorted per row)."""
    cols = np.repeat(np.arange(len(b_ptr) - 1, dtype=np.int64), np.diff(b_ptr))
    order = np.argsort(b_idx, kind="stable")
    r_ptr = np.zeros(n_inner + 1, np.int64)
    np.cumsum(np.bincount(b_idx, minlength=n_inner), out=r_ptr[1:])
    return r_ptr, cols[order], b_val[order]


def _spgemm_numpy(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, n_inner):
    n_rows = len(a_ptr) - 1
    n_cols = len(b_ptr) - 1
    r_ptr, r_col, r_val = _csc_as_rows(b_ptr, b_idx, b_val, n_inner)

    a_rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(a_ptr))
    cnt = r_ptr[a_idx + 1] - r_ptr[a_idx]
    flops = np.bincount(a_rows, weights=cnt, minlength=n_rows).astype(np.int64)
    total = int(cnt.sum())
    c_ptr = np.zeros(n_rows + 1, np.int64)
    if total == 0:
        return c_ptr, np.zeros(0, np.int64), np.zeros(0), flops, 0, 0

    src = np.repeat(np.arange(len(a_idx), dtype=np.int64), cnt)
    first_of_src = np.cumsum(cnt) - cnt
    bpos = r_ptr[a_idx[src]] + (np.arange(total, dtype=np.int64) - first_of_src[src])
    key = a_rows[src] * n_cols + r_col[bpos]
    prod = a_val[src] * r_val[bpos]
    # products arrive grouped by (row, inner index); a stable sort on (row, col)
    # keeps ascending inner index inside every output entry
    order = np.argsort(key, kind="stable")
    key = key[order]
    prod = prod[order]
    first = np.ones(total, dtype=bool)
    first[1:] = key[1:] != key[:-1]
    group = np.cumsum(first) - 1
    c_val = np.bincount(group, weights=prod)
    ukey = key[first]
    np.cumsum(np.bincount(ukey // n_cols, minlength=n_rows), out=c_ptr[1:])
    nnz = len(ukey)
    return c_ptr, ukey % n_cols, c_val, flops, nnz, nnz


def spgemm_arrays(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, n_inner, tile=DEFAULT_TILE, backend=None):
    """Multiply CSR rows by a CSC matrix.

    Returns ``(c_ptr, c_idx, c_val, row_flops, allocated_nnz, produced_nnz)``.
    """
    if tile < 1:
        raise ValueError("tile width must be >= 1")
    if resolve_backend(backend) == "numba":
        return _spgemm_numba(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, int(n_inner), int(tile))
    return _spgemm_numpy(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, n_inner)


# --------------------------------------------------------------------------
# Row-block partition boundaries
# --------------------------------------------------------------------------

@njit(nogil=True)
def _robw_bounds_nb(row_ptr, m_a, index_bytes, entry_bytes):
    n = len(row_ptr) - 1
    bounds = np.empty(n + 1, np.int64)
    bounds[0] = 0
    nseg = 0
    start = 0
    while start < n:
        end = start
        z = 0
        q = row_ptr[end + 1] - row_ptr[end]
        k = 1
        while end < n and (k + 1) * index_bytes + q * entry_bytes <= m_a:
            z += row_ptr[end + 1] - row_ptr[end]
            end += 1
            if end < n:
                q = z + row_ptr[end + 1] - row_ptr[end]
            else:
                q = z
            k = end - start + 1
        if end == start:
            return bounds[:1], start
        nseg += 1
        bounds[nseg] = end
        start = end
    return bounds[: nseg + 1], -1


def _robw_bounds_numpy(row_ptr, m_a, index_bytes, entry_bytes):
    n = len(row_ptr) - 1
    # cost of rows [s, e) is f(e) - f(s) + I with f strictly increasing
    f = np.arange(n + 1, dtype=np.int64) * index_bytes + row_ptr * entry_bytes
    bounds = [0]
    start = 0
    while start < n:
        end = int(np.searchsorted(f, m_a - index_bytes + f[start], side="right")) - 1
        end = min(end, n)
        if end <= start:
            return np.asarray(bounds, np.int64), start
        bounds.append(end)
        start = end
    return np.asarray(bounds, np.int64), -1


def robw_bounds(row_ptr, m_a, index_bytes, entry_bytes, backend=None):
    """Greedy maximal row-block boundaries ``[0, e1, e2, ..., n_rows]``."""
    row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
    if resolve_backend(backend) == "numba":
        bounds, bad = _robw_bounds_nb(row_ptr, int(m_a), int(index_bytes), int(entry_bytes))
    else:
        bounds, bad = _robw_bounds_numpy(row_ptr, int(m_a), int(index_bytes), int(entry_bytes))
    if bad >= 0:
        q = int(row_ptr[bad + 1] - row_ptr[bad])
        raise RowTooLarge(int(bad), 2 * index_bytes + q * entry_bytes, int(m_a))
    return np.asarray(bounds, dtype=np.int64)


# --------------------------------------------------------------------------
# Sparse rows x dense matrix
# --------------------------------------------------------------------------

@njit(nogil=True)
def _spmm_dense_nb(a_ptr, a_idx, a_val, w):
    n = len(a_ptr) - 1
    out = np.zeros((n, w.shape[1]), np.float64)
    for i in range(n):
        for p in range(a_ptr[i], a_ptr[i + 1]):
            v = a_val[p]
            k = a_idx[p]
            for c in range(w.shape[1]):
                out[i, c] += v * w[k, c]
    return out


def spmm_dense(a_ptr, a_idx, a_val, w, backend=None):
    w = np.ascontiguousarray(w, dtype=np.float64)
    if resolve_backend(backend) == "numba":
        return _spmm_dense_nb(a_ptr, a_idx, a_val, w)
    n = len(a_ptr) - 1
    out = np.zeros((n, w.shape[1]), np.float64)
    rows = np.repeat(np.arange(n), np.diff(a_ptr))
    np.add.at(out, rows, a_val[:, None] * w[a_idx])
    return out


# --------------------------------------------------------------------------
# 64-bit FNV-1a
# --------------------------------------------------------------------------

@njit(nogil=True)
def _fnv1a_nb(data):
    h = np.uint64(_FNV_OFFSET)
    prime = np.uint64(_FNV_PRIME)
    for b in data:
        h = (h ^ np.uint64(b)) * prime
    return h


def fnv1a64(data: bytes, backend=None) -> int:
    if resolve_backend(backend) == "numba":
        return int(_fnv1a_nb(np.frombuffer(data, dtype=np.uint8)))
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h
