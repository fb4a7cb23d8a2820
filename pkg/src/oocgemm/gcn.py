"""Forward pass of one GCN layer built on the out-of-core multiply.

The layer is ``relu((D^-1/2 (A + I) D^-1/2) @ H @ W)``: the aggregation is a
sparse-sparse product run through a scheduler strategy and the combination
is a sparse-dense product followed by ReLU and re-sparsification.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NegativeWeight, NonSquare, ParseError
from .kernels import DEFAULT_TILE, spmm_dense
from .memory import MemoryBudget
from .scheduler import RunReport, generous_budget, run_aires, run_maxmemory
from .sim import SimConfig
from .sparse import CscMatrix, CsrMatrix, DenseMatrix, csr_from_triplets, csr_to_triplets, from_dense
from .spgemm import spgemm_full

_WEIGHT_HEADER = struct.Struct("<QQ")


@dataclass(frozen=True, eq=False)
class GcnLayerSpec:
    weight: DenseMatrix
    feature_dim: int = 256
    feature_sparsity_pct: float = 99.0
    activation: str = "relu"

    def __post_init__(self):
        if self.activation != "relu":
            raise ValueError("only ReLU is supported")

    @property
    def in_features(self):
        return self.weight.n_rows

    @property
    def out_features(self):
        return self.weight.n_cols


@dataclass(frozen=True)
class NormalizedAdjacency:
    a_tilde: CsrMatrix


@dataclass
class LayerOutput:
    h: CsrMatrix
    report: Optional[RunReport] = None


@dataclass
class Engine:
    """Which multiply runs the aggregation, and under what budget.

    ``strategy`` is ``"in_core"``, ``"aires"`` or ``"maxmemory"``. With no
    budget, an out-of-core strategy gets twice the operand footprint.
    """

    strategy: str = "aires"
    budget: Optional[MemoryBudget] = None
    config: Optional[SimConfig] = None
    tile: int = DEFAULT_TILE
    backend: Optional[str] = None
    last_report: Optional[RunReport] = field(default=None, repr=False)


def normalize_adjacency(a: CsrMatrix) -> NormalizedAdjacency:
    if a.n_rows != a.n_cols:
        raise NonSquare(f"adjacency must be square, got {a.shape}")
    if a.nnz and a.values.min() < 0:
        raise NegativeWeight("adjacency weights must be non-negative")
    n = a.n_rows
    rows, cols, vals = csr_to_triplets(a)
    diag = np.arange(n)
    a_hat = csr_from_triplets(
        np.concatenate([rows, diag]), np.concatenate([cols, diag]), np.concatenate([vals, np.ones(n)]), n, n
    )
    deg = np.bincount(np.repeat(np.arange(n), a_hat.row_nnz()), weights=a_hat.values, minlength=n)
    r, c, v = csr_to_triplets(a_hat)
    # one sqrt of the product keeps (i, j) and (j, i) bit-identical
    scaled = v / np.sqrt(deg[r] * deg[c])
    return NormalizedAdjacency(CsrMatrix(n, n, a_hat.row_ptr, a_hat.col_idx, scaled))


def aggregate(n: NormalizedAdjacency, h: CscMatrix, engine: Optional[Engine] = None) -> CsrMatrix:
    engine = engine or Engine()
    a = n.a_tilde
    if a.n_cols != h.n_rows:
        raise DimensionMismatch(f"adjacency is {a.shape}, features are {h.shape}")
    if engine.strategy == "in_core":
        engine.last_report = None
        return spgemm_full(a, h, tile=engine.tile, backend=engine.backend)
    runner = {"aires": run_aires, "maxmemory": run_maxmemory}.get(engine.strategy)
    if runner is None:
        raise ValueError(f"unknown strategy {engine.strategy!r}")
    budget = engine.budget or MemoryBudget(generous_budget(a, h))
    x, report = runner(a, h, budget, engine.config, tile=engine.tile, backend=engine.backend)
    engine.last_report = report
    return x


def combine(x: CsrMatrix, w: DenseMatrix, backend=None) -> CsrMatrix:
    """``relu(x @ w)`` with zeros dropped from the sparse result."""
    if x.n_cols != w.n_rows:
        raise DimensionMismatch(f"X has {x.n_cols} columns, W has {w.n_rows} rows")
    dense = spmm_dense(x.row_ptr, x.col_idx, x.values, w.data, backend=backend)
    np.maximum(dense, 0.0, out=dense)
    return from_dense(dense)


def layer_forward(a: CsrMatrix, h: CscMatrix, spec: GcnLayerSpec, engine: Optional[Engine] = None) -> LayerOutput:
    engine = engine or Engine()
    if h.n_cols != spec.in_features:
        raise DimensionMismatch(f"features have {h.n_cols} columns, weight expects {spec.in_features}")
    x = aggregate(normalize_adjacency(a), h, engine)
    return LayerOutput(combine(x, spec.weight, backend=engine.backend), engine.last_report)


def dense_layer_oracle(a: DenseMatrix, h: DenseMatrix, w: DenseMatrix) -> DenseMatrix:
    """Dense reference for one layer, independent of the sparse path."""
    from .spgemm import dense_oracle

    n = a.n_rows
    a_hat = a.data + np.eye(n)
    deg = a_hat.sum(axis=1)
    a_tilde = a_hat / np.sqrt(np.outer(deg, deg))
    x = dense_oracle(DenseMatrix(n, n, a_tilde), h)
    xw = dense_oracle(x, w)
    return DenseMatrix(xw.n_rows, xw.n_cols, np.maximum(xw.data, 0.0))


# --------------------------------------------------------------------------
# Weight files: 16-byte header (rows, cols as u64 LE) then row-major f64
# --------------------------------------------------------------------------

def save_weight(path, w: DenseMatrix):
    data = np.ascontiguousarray(w.data, dtype="<f8")
    Path(path).write_bytes(_WEIGHT_HEADER.pack(w.n_rows, w.n_cols) + data.tobytes())


def load_weight(path) -> DenseMatrix:
    buf = Path(path).read_bytes()
    if len(buf) < _WEIGHT_HEADER.size:
        raise ParseError(f"{path}: truncated weight header")
    rows, cols = _WEIGHT_HEADER.unpack_from(buf, 0)
    if len(buf) != _WEIGHT_HEADER.size + 8 * rows * cols:
        raise ParseError(f"{path}: expected {rows}x{cols} float64 payload")
    data = np.frombuffer(buf, "<f8", rows * cols, _WEIGHT_HEADER.size).astype(np.float64)
    return DenseMatrix(rows, cols, data.reshape(rows, cols))
