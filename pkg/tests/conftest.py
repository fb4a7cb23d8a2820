import numpy as np
import pytest

from oocgemm._jit import HAVE_NUMBA
from oocgemm.sparse import csr_from_triplets

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def rand_csr(rng, n_rows, n_cols, density):
    """Uniform random CSR with values in [-1, 1); duplicates are summed away."""
    k = int(rng.binomial(n_rows * n_cols, density))
    rows = rng.integers(0, n_rows, k)
    cols = rng.integers(0, n_cols, k)
    vals = rng.uniform(-1.0, 1.0, k)
    return csr_from_triplets(rows, cols, vals, n_rows, n_cols)


@pytest.fixture
def alg1_matrix():
    """4 rows with 2, 3, 1 and 3 nonzeros."""
    nnz = [2, 3, 1, 3]
    rows = np.repeat(np.arange(4), nnz)
    cols = np.concatenate([np.arange(k) for k in nnz])
    vals = np.arange(1, 10, dtype=float)
    return csr_from_triplets(rows, cols, vals, 4, 4)


# pass/fail lines from the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
