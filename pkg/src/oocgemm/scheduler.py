"""Out-of-core SpGEMM schedules driven over the tiered simulator.

``run_aires`` is the three-phase schedule: B goes straight to the device
over the direct storage channel while A is staged in host memory and cut into
row-aligned segments; segments then stream to the device one at a time and
the output grows on the device by exactly what each block produces; finally
C drains to host and storage.

``run_maxmemory`` is the static baseline: the device is split evenly between
B and the A stream, A is cut at raw byte offsets and every row cut in two
makes a round trip through the host to be merged.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import CapacityExceeded, DimensionMismatch, InsufficientDeviceMemory, RowTooLarge
from .kernels import DEFAULT_TILE, fnv1a64
from .memory import MemoryBudget, block_budget, calc_mem, estimate_b_memory, estimate_output_memory, matrix_stats
from .partition import (
    RawSegment,
    RobwSegment,
    carried_fragment,
    maxmemory_partition,
    merge_partial,
    robw_partition,
    row_block,
)
from .sim import D2H, DEVICE, GDS, H2D, H2S, HOST, MERGE_PREFIX, S2H, STORAGE, IoLedger, SimConfig, TieredSystem
from .sparse import CscMatrix, CsrMatrix, byte_size, csr_to_bytes
from .spgemm import spgemm_block, stack_blocks

STRATEGIES = ("aires", "maxmemory")

REPORT_COLUMNS = (
    "strategy", "budget_bytes", "total_s", "phase1_s", "phase2_s", "phase3_s",
    "gds_bytes", "s2h_bytes", "h2d_bytes", "d2h_bytes", "merge_bytes", "segments", "oom", "c_checksum",
)


def checksum(c: CsrMatrix, backend=None) -> str:
    """64-bit FNV-1a of the canonical binary serialisation, as 16 hex digits."""
    return f"{fnv1a64(csr_to_bytes(c), backend=backend):016x}"


@dataclass
class SchedulePlan:
    strategy: str
    budget: MemoryBudget
    partition: list
    b_bytes: int
    c_estimate: int
    segment_budget: int

    def __post_init__(self):
        want = RobwSegment if self.strategy == "aires" else RawSegment
        if any(not isinstance(s, want) for s in self.partition):
            raise TypeError(f"{self.strategy} plan needs {want.__name__} segments")


@dataclass
class RunReport:
    strategy: str
    budget_bytes: int
    total_s: float = 0.0
    phase_s: tuple = (0.0, 0.0, 0.0)
    ledger: IoLedger = field(default_factory=IoLedger)
    c_checksum: str = ""
    segments: int = 0
    merge_s: float = 0.0
    oom: bool = False
    early_drains: int = 0
    error: str = ""
    trace: list = field(default_factory=list, repr=False)
    config: Optional[SimConfig] = field(default=None, repr=False)

    @property
    def host_device_bytes(self) -> int:
        return self.ledger.bytes_on(H2D) + self.ledger.bytes_on(D2H)

    @property
    def merge_share(self) -> float:
        return self.merge_s / self.total_s if self.total_s > 0 else 0.0

    def csv_row(self):
        led = self.ledger
        return (
            self.strategy, self.budget_bytes, repr(float(self.total_s)),
            *(repr(float(x)) for x in self.phase_s),
            led.bytes_on(GDS), led.bytes_on(S2H), led.bytes_on(H2D), led.bytes_on(D2H),
            led.merge_bytes, self.segments, int(self.oom), self.c_checksum,
        )


def reports_csv(reports: Sequence[RunReport], extra: Optional[dict] = None) -> str:
    """Serialise reports with the fixed column set.

    ``extra`` maps leading column names to per-report value lists.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra = extra or {}
    w.writerow((*extra.keys(), *REPORT_COLUMNS))
    for i, r in enumerate(reports):
        w.writerow((*(v[i] for v in extra.values()), *r.csv_row()))
    return buf.getvalue()


# --------------------------------------------------------------------------
# Planning
# --------------------------------------------------------------------------

def generous_budget(a: CsrMatrix, b: CscMatrix, sizes=None) -> int:
    """A device size that comfortably fits either strategy for ``a @ b``."""
    from .sparse import ElementSizes

    sizes = sizes or ElementSizes()
    m_c = estimate_output_memory(matrix_stats(a, sizes), matrix_stats(b, sizes))
    return 2 * (byte_size(a, sizes) + byte_size(b, sizes)) + m_c + 4096


def _check_dims(a, b):
    if a.n_cols != b.n_rows:
        raise DimensionMismatch(f"A is {a.shape}, B is {b.shape}")


def plan_aires(a: CsrMatrix, b: CscMatrix, budget: MemoryBudget, backend=None) -> SchedulePlan:
    """Feasibility check and row-block partition, before any data moves."""
    _check_dims(a, b)
    sizes = budget.element_sizes
    m_c = estimate_output_memory(matrix_stats(a, sizes), matrix_stats(b, sizes))
    m_b = estimate_b_memory(matrix_stats(b, sizes))
    blocks = block_budget(budget, m_c, m_b)
    segments = robw_partition(a, blocks.segment_bytes, sizes, backend=backend)
    return SchedulePlan("aires", budget, segments, m_b, m_c, blocks.segment_bytes)


def plan_maxmemory(a: CsrMatrix, b: CscMatrix, budget: MemoryBudget) -> SchedulePlan:
    _check_dims(a, b)
    sizes = budget.element_sizes
    m_b = byte_size(b, sizes)
    b_half = budget.device_total // 2
    if m_b > b_half:
        raise InsufficientDeviceMemory(f"B needs {m_b} bytes but its static half of the device is {b_half}")
    m_a = (budget.device_total - b_half) // 2
    if m_a <= 0:
        raise InsufficientDeviceMemory("no room for an A stream window")
    m_c = estimate_output_memory(matrix_stats(a, sizes), matrix_stats(b, sizes))
    return SchedulePlan("maxmemory", budget, maxmemory_partition(a, m_a, sizes), m_b, m_c, m_a)


# --------------------------------------------------------------------------
# Shared device-side output handling
# --------------------------------------------------------------------------

class _OutputArea:
    """C chunks resident on the device, allocated row range by row range."""

    def __init__(self, sys: TieredSystem, sizes):
        self.sys = sys
        self.sizes = sizes
        self.chunks = []  # (buffer id, rows, nnz)
        self.n_drains = 0
        self.n_chunks = 0
        self.early = 0

    def drain(self, tag: str) -> bool:
        if not self.chunks:
            return False
        rows = sum(c[1] for c in self.chunks)
        nnz = sum(c[2] for c in self.chunks)
        ids = [c[0] for c in self.chunks]
        self.sys.transfer(D2H, ids, f"{tag}{self.n_drains}", calc_mem(rows, nnz, self.sizes))
        for cid in ids:
            self.sys.free(DEVICE, cid)
        self.chunks = []
        self.n_drains += 1
        return True

    def emit(self, res, operands, tag: str):
        """Allocate output for ``res`` in row chunks that fit, computing each.

        Resident output is drained to the host whenever the next chunk would
        not fit; if a single output row cannot fit on an otherwise empty
        output area the run is infeasible.
        """
        sizes = self.sizes
        row_nnz = np.diff(res.block.row_ptr)
        n = len(row_nnz)
        # f(e) - f(s) + I is the footprint of rows [s, e)
        f = np.arange(n + 1, dtype=np.int64) * sizes.index_bytes + res.block.row_ptr * sizes.entry_bytes
        r = 0
        while r < n:
            free = self.sys.free_bytes(DEVICE)
            e = int(np.searchsorted(f, free - sizes.index_bytes + f[r], side="right")) - 1
            e = min(e, n)
            if e <= r:
                if self.drain("Cdrain"):
                    continue
                need = calc_mem(1, int(row_nnz[r]), sizes)
                raise InsufficientDeviceMemory(
                    f"output row {res.start_row + r} needs {need} bytes, only {int(free)} free on device"
                )
            cid = f"{tag}.{self.n_chunks}"
            self.n_chunks += 1
            q = int(res.block.row_ptr[e] - res.block.row_ptr[r])
            self.sys.alloc(DEVICE, cid, calc_mem(e - r, q, sizes))
            self.chunks.append((cid, e - r, q))
            self.sys.compute(int(res.row_flops[r:e].sum()), [*operands, cid])
            r = e


def _finish(sys: TieredSystem, c: CsrMatrix, sizes, host_parts):
    """Phase III tail shared by both strategies: assemble on host, persist."""
    c_bytes = byte_size(c, sizes)
    sys.alloc(HOST, "C", c_bytes)
    sys.host_work(c_bytes, "assemble_c")
    for part in host_parts:
        sys.free(HOST, part)
    blob = csr_to_bytes(c)
    sys.transfer(H2S, "C", "C")
    sys.blobs["C"] = blob
    sys.free(HOST, "C")


def _host_buffers(sys, prefix):
    return [k for k in sys.tiers[HOST].resident if k.startswith(prefix)]


# --------------------------------------------------------------------------
# AIRES
# --------------------------------------------------------------------------

def run_aires(a: CsrMatrix, b: CscMatrix, budget: MemoryBudget, config: Optional[SimConfig] = None, *,
              tile: int = DEFAULT_TILE, backend=None):
    """Three-phase out-of-core multiply; returns ``(C, RunReport)``.

    Raises:
        InsufficientDeviceMemory: B plus the output estimate leaves no room,
            or a single output row cannot fit next to B and its segment.
        RowTooLarge: a single row of A exceeds the segment budget.
    """
    plan = plan_aires(a, b, budget, backend=backend)
    sizes = budget.element_sizes
    cfg = (config or SimConfig()).with_capacities(budget.device_total, budget.host_total)
    sys = TieredSystem(cfg)
    try:
        c, out = _aires_body(sys, a, b, plan, sizes, tile, backend)
    except CapacityExceeded as exc:
        if exc.tier != DEVICE:
            raise
        raise InsufficientDeviceMemory(str(exc)) from exc
    return c, _report("aires", budget, sys, c, len(plan.partition), 0.0, out.early, backend)


def _aires_body(sys, a, b, plan, sizes, tile, backend):
    a_bytes = byte_size(a, sizes)
    sys.alloc(STORAGE, "A", a_bytes)
    sys.alloc(STORAGE, "B", plan.b_bytes)

    sys.set_phase("I")
    sys.concurrent([(GDS, "B", "B", None), (S2H, "A", "A", None)])
    sys.host_work(a_bytes, "robw_partition")
    for seg in plan.partition:
        sys.alloc(HOST, f"A{seg.seg_index}", seg.byte_size)
    sys.free(HOST, "A")

    sys.set_phase("II")
    out = _OutputArea(sys, sizes)
    results = []
    prev = None
    for seg in plan.partition:
        sid = f"A{seg.seg_index}"
        if prev is not None:
            sys.free(DEVICE, prev)
        if seg.byte_size > sys.free_bytes(DEVICE):
            out.drain("Cdrain")
        if seg.byte_size > sys.free_bytes(DEVICE):
            raise InsufficientDeviceMemory(
                f"segment {seg.seg_index} needs {seg.byte_size} bytes, {int(sys.free_bytes(DEVICE))} free"
            )
        sys.transfer(H2D, sid)
        res = spgemm_block(seg, b, tile=tile, backend=backend)
        out.emit(res, [sid, "B"], f"C{seg.seg_index}")
        results.append(res)
        prev = sid

    sys.set_phase("III")
    c = stack_blocks(results, a.n_rows, b.n_cols)
    if prev is not None:
        sys.free(DEVICE, prev)
    out.early = out.n_drains
    out.drain("Ctail")
    sys.free(DEVICE, "B")
    for seg in plan.partition:
        sys.free(HOST, f"A{seg.seg_index}")
    _finish(sys, c, sizes, _host_buffers(sys, "Cdrain") + _host_buffers(sys, "Ctail"))
    return c, out


# --------------------------------------------------------------------------
# MaxMemory baseline
# --------------------------------------------------------------------------

def run_maxmemory(a: CsrMatrix, b: CscMatrix, budget: MemoryBudget, config: Optional[SimConfig] = None, *,
                  tile: int = DEFAULT_TILE, backend=None):
    """Static half/half baseline with byte-granular A segments.

    ``merge_s`` on the report is the time spent on the fragment round trips:
    device-to-host return, host merge, and re-sending the fragment bytes.
    """
    plan = plan_maxmemory(a, b, budget)
    sizes = budget.element_sizes
    cfg = (config or SimConfig()).with_capacities(budget.device_total, budget.host_total)
    sys = TieredSystem(cfg)
    try:
        c, merge_s, n_drains = _maxmemory_body(sys, a, b, plan, sizes, tile, backend)
    except CapacityExceeded as exc:
        if exc.tier != DEVICE:
            raise
        raise InsufficientDeviceMemory(str(exc)) from exc
    return c, _report("maxmemory", budget, sys, c, len(plan.partition), merge_s, n_drains, backend)


def _maxmemory_body(sys, a, b, plan, sizes, tile, backend):
    a_bytes = byte_size(a, sizes)
    sys.alloc(STORAGE, "A", a_bytes)
    sys.alloc(STORAGE, "B", plan.b_bytes)

    sys.set_phase("I")
    sys.transfer(S2H, "A")
    sys.transfer(S2H, "B")
    sys.host_work(a_bytes, "stage_stream")
    sys.transfer(H2D, "B")

    sys.set_phase("II")
    h2d_bw = sys.config.channels[H2D].bandwidth
    out = _OutputArea(sys, sizes)
    results = []
    merge_s = 0.0
    carry = None
    for raw in plan.partition:
        s = raw.seg_index
        seg = merge_partial(carry, raw)
        if carry is not None:
            merge_s += sys.host_work(carry.nbytes, f"{MERGE_PREFIX}{s}", merge=True)
            sys.free(HOST, f"frag{carry.source_seg}")
            # the carried bytes ride along with the next segment upload
            merge_s += carry.nbytes / h2d_bw
        k = seg.row_end - seg.row_start
        sid = f"S{s}"
        sys.transfer(H2D, "A", sid, seg.nbytes + (k + 1) * sizes.index_bytes)
        if k > 0:
            res = spgemm_block(row_block(a, seg.row_start, seg.row_end, s, sizes), b, tile=tile, backend=backend)
            out.emit(res, [sid, "B"], f"C{s}")
            out.drain("Cdrain")
            results.append(res)
        carry = carried_fragment(seg)
        if carry is not None:
            merge_s += sys.transfer(D2H, sid, f"frag{s}", carry.nbytes)
        sys.free(DEVICE, sid)

    sys.set_phase("III")
    c = stack_blocks(results, a.n_rows, b.n_cols) if results else _empty_product(a, b)
    sys.free(DEVICE, "B")
    sys.free(HOST, "B")
    sys.free(HOST, "A")
    _finish(sys, c, sizes, _host_buffers(sys, "Cdrain"))
    return c, merge_s, out.n_drains


def _empty_product(a, b):
    return CsrMatrix(a.n_rows, b.n_cols, np.zeros(a.n_rows + 1, np.int64), np.zeros(0, np.int64), np.zeros(0))


def _report(strategy, budget, sys, c, n_seg, merge_s, n_drains, backend):
    return RunReport(
        strategy=strategy,
        budget_bytes=budget.device_total,
        total_s=sys.clock,
        phase_s=(sys.phase_seconds["I"], sys.phase_seconds["II"], sys.phase_seconds["III"]),
        ledger=sys.ledger.snapshot(),
        c_checksum=checksum(c, backend=backend),
        segments=n_seg,
        merge_s=merge_s,
        early_drains=n_drains,
        trace=list(sys.trace),
        config=sys.config,
    )


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

RUNNERS = {"aires": run_aires, "maxmemory": run_maxmemory}


def run_strategy(strategy, a, b, budget, config=None, **kw):
    """Run one cell; infeasibility becomes an ``oom`` report instead of raising."""
    try:
        c, rep = RUNNERS[strategy](a, b, budget, config, **kw)
    except (InsufficientDeviceMemory, RowTooLarge, CapacityExceeded) as exc:
        return None, RunReport(strategy, budget.device_total, oom=True, error=str(exc))
    return c, rep


def compare_strategies(a: CsrMatrix, b: CscMatrix, budgets: Sequence[int], config: Optional[SimConfig] = None,
                       *, sizes=None, host_total: int = 1 << 40, strategies=STRATEGIES, jobs: int = 1,
                       tile: int = DEFAULT_TILE, backend=None) -> List[RunReport]:
    """One report per (budget, strategy); OOM is recorded, never raised.

    Rows come back ordered by budget, then by the order of ``strategies``.
    """
    from .sparse import ElementSizes

    sizes = sizes or ElementSizes()
    cells = [(bud, s) for bud in budgets for s in strategies]

    def one(cell):
        bud, s = cell
        budget = MemoryBudget(int(bud), host_total, sizes)
        return run_strategy(s, a, b, budget, config, tile=tile, backend=backend)[1]

    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, cells))
    else:
        reports = [one(c) for c in cells]
    return reports


def speedups(reports: Sequence[RunReport]):
    """``{budget: maxmemory_total / aires_total}`` where both completed."""
    by = {}
    for r in reports:
        if not r.oom:
            by.setdefault(r.budget_bytes, {})[r.strategy] = r.total_s
    return {
        bud: d["maxmemory"] / d["aires"]
        for bud, d in by.items()
        if "aires" in d and "maxmemory" in d and d["aires"] > 0
    }
