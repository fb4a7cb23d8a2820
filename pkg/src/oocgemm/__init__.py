"""Out-of-core row-block SpGEMM over a simulated device/host/storage hierarchy."""
from .errors import *  # noqa: F401,F403
from .memory import (
    MatrixStats,
    MemoryBudget,
    block_budget,
    calc_mem,
    estimate_b_memory,
    estimate_output_memory,
    matrix_stats,
)
from .partition import (
    Fragment,
    RawSegment,
    RobwSegment,
    maxmemory_partition,
    merge_partial,
    robw_partition,
)
from .scheduler import RunReport, compare_strategies, run_aires, run_maxmemory
from .sim import Channel, SimConfig, TieredSystem, overlap_window
from .sparse import (
    CscMatrix,
    CsrMatrix,
    DenseMatrix,
    ElementSizes,
    byte_size,
    csc_to_csr,
    csr_from_triplets,
    csr_to_csc,
    identity,
    load_matrix_market,
    to_dense,
)
from .spgemm import dense_oracle, spgemm_block, spgemm_full

__version__ = "0.1.0"
