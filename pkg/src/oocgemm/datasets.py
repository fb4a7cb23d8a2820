"""Seeded synthetic matrices and desk-scale stand-ins for large graph datasets.

The stand-ins do not try to mimic the graphs themselves. They only keep the
ratio between the full working set (A, B and C together) and the device
budget, which is what puts a run under out-of-core pressure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidDensity
from .sparse import CscMatrix, CsrMatrix, ElementSizes, byte_size, csr_from_triplets, csr_to_csc
from .spgemm import spgemm_full

# name: (working set GB, device GB)
GRAPH_MEMORY = {
    "rUSA": (3.31, 3.0),
    "kV2a": (6.87, 6.0),
    "kU1a": (8.2, 8.0),
    "socLJ1": (12.14, 11.0),
    "kP1a": (17.45, 16.0),
    "kA2a": (21.18, 18.0),
    "kV1r": (27.18, 23.0),
}

# device sizes (GB) used in the memory-constraint sweep
CONSTRAINT_SWEEP = {
    "kV1r": (24.0, 21.0, 19.0),
    "kP1a": (16.0, 14.0, 12.0),
    "socLJ1": (11.0, 10.0, 8.0),
}


def _check_density(density):
    if not 0 < density <= 1:
        raise InvalidDensity(f"density must lie in (0, 1], got {density}")


def _values(rng, k):
    # strictly positive, so no sampled entry vanishes
    return 1.0 - rng.random(k)


def random_symmetric(n: int, density: float, seed: int) -> CsrMatrix:
    """Symmetric n x n matrix with about ``density * n * n`` stored entries.

    A fixed number of positions is drawn without replacement from the lower
    triangle (diagonal included) and mirrored.
    """
    _check_density(density)
    rng = np.random.default_rng(seed)
    pairs = n * (n + 1) // 2
    k = min(pairs, int(round(density * pairs)))
    lin = np.sort(rng.choice(pairs, size=k, replace=False)).astype(np.int64)
    i = ((np.sqrt(8.0 * lin + 1.0) - 1.0) // 2).astype(np.int64)
    # repair any float rounding in the triangular-root inversion
    i -= (i * (i + 1) // 2) > lin
    i += ((i + 1) * (i + 2) // 2) <= lin
    j = lin - i * (i + 1) // 2
    v = _values(rng, k)
    off = i != j
    rows = np.concatenate([i, j[off]])
    cols = np.concatenate([j, i[off]])
    vals = np.concatenate([v, v[off]])
    return csr_from_triplets(rows, cols, vals, n, n)


def random_sparse(n_rows: int, n_cols: int, density: float, seed: int) -> CsrMatrix:
    _check_density(density)
    rng = np.random.default_rng(seed)
    total = n_rows * n_cols
    k = min(total, int(round(density * total)))
    lin = rng.choice(total, size=k, replace=False).astype(np.int64)
    return csr_from_triplets(lin // n_cols, lin % n_cols, _values(rng, k), n_rows, n_cols)


def random_features(n: int, dim: int, sparsity_pct: float, seed: int) -> CscMatrix:
    """n x dim feature matrix with the given percentage of zeros, in CSC."""
    density = (100.0 - sparsity_pct) / 100.0
    if density <= 0:
        return CscMatrix(n, dim, np.zeros(dim + 1, np.int64), np.zeros(0, np.int64), np.zeros(0))
    return csr_to_csc(random_sparse(n, dim, density, seed))


def working_set(a: CsrMatrix, b: CscMatrix, c: CsrMatrix, sizes: ElementSizes = ElementSizes()) -> int:
    return byte_size(a, sizes) + byte_size(b, sizes) + byte_size(c, sizes)


@dataclass
class DeskInstance:
    name: str
    a: CsrMatrix
    b: CscMatrix
    requirement: int

    def budgets(self, constraints=None):
        """Device budgets whose ratio to ``requirement`` matches the real dataset."""
        req_gb, dev_gb = GRAPH_MEMORY[self.name]
        constraints = constraints or CONSTRAINT_SWEEP.get(self.name, (dev_gb,))
        return [int(self.requirement * gb / req_gb) for gb in constraints]


def desk_instance(name: str, n: int = 1200, features: int = 16, degree: float = 3.0,
                  feature_density: float = 0.9, seed: Optional[int] = None) -> DeskInstance:
    """A sparse adjacency-like A and a feature-like B sized for budget sweeps.

    Dense, narrow features keep the output close to B in size, so B is a
    large share of the working set (about 43% with the defaults); that is the
    regime in which a static half-device reservation for B runs out first.
    Each name gets its own default seed, so the stand-ins differ.
    """
    if name not in GRAPH_MEMORY:
        raise KeyError(f"unknown dataset {name!r}; choose from {sorted(GRAPH_MEMORY)}")
    if seed is None:
        seed = 10 * list(GRAPH_MEMORY).index(name)
    a = random_sparse(n, n, degree / n, seed)
    b = csr_to_csc(random_sparse(n, features, feature_density, seed + 1))
    c = spgemm_full(a, b)
    return DeskInstance(name, a, b, working_set(a, b, c))
