import numpy as np
import pytest

from oocgemm.datasets import (
    CONSTRAINT_SWEEP,
    GRAPH_MEMORY,
    desk_instance,
    random_features,
    random_sparse,
    random_symmetric,
)
from oocgemm.errors import InvalidDensity
from oocgemm.sparse import csr_to_bytes, to_dense


def test_symmetric_generator():
    a = random_symmetric(100, 0.05, 7)
    assert csr_to_bytes(a) == csr_to_bytes(random_symmetric(100, 0.05, 7))
    d = to_dense(a).data
    assert np.array_equal(d, d.T)
    assert abs(a.nnz - 500) <= 50
    assert csr_to_bytes(a) != csr_to_bytes(random_symmetric(100, 0.05, 8))


@pytest.mark.parametrize("density", [0, -0.1, 1.5])
def test_invalid_density(density):
    with pytest.raises(InvalidDensity):
        random_symmetric(10, density, 0)
    with pytest.raises(InvalidDensity):
        random_sparse(10, 10, density, 0)


def test_features():
    h = random_features(100, 16, 99.0, 1)
    assert h.shape == (100, 16) and h.nnz == 16
    assert random_features(10, 4, 100.0, 1).nnz == 0
    assert random_sparse(10, 10, 1.0, 0).nnz == 100


def test_desk_instances_keep_ratios():
    for name in CONSTRAINT_SWEEP:
        inst = desk_instance(name, n=300)
        req_gb, _ = GRAPH_MEMORY[name]
        for bud, gb in zip(inst.budgets(), CONSTRAINT_SWEEP[name]):
            # budgets are floored to whole bytes
            assert 0 <= gb / req_gb - bud / inst.requirement < 1 / inst.requirement
    with pytest.raises(KeyError):
        desk_instance("nope")
