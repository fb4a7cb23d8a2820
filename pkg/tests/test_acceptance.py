"""Acceptance criteria, one test each, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or as a script.
"""
import math
import time

import numpy as np

from oocgemm.datasets import CONSTRAINT_SWEEP, desk_instance, random_features, random_sparse, random_symmetric
from oocgemm.gcn import GcnLayerSpec, dense_layer_oracle, layer_forward, normalize_adjacency
from oocgemm.memory import (
    MatrixStats,
    MemoryBudget,
    block_budget,
    calc_mem,
    estimate_b_memory,
    estimate_output_memory,
    matrix_stats,
)
from oocgemm.partition import concat_segments, robw_partition
from oocgemm.scheduler import (
    checksum,
    compare_strategies,
    generous_budget,
    reports_csv,
    run_aires,
    run_maxmemory,
    run_strategy,
)
from oocgemm.sim import check_trace, fold_ledger
from oocgemm.sparse import DenseMatrix, csr_from_triplets, csr_to_csc, to_dense
from oocgemm.spgemm import dense_oracle, spgemm_full

from conftest import ACCEPTANCE_LINES, rand_csr

# budget sweep shared by the merge-overhead, transfer and speedup criteria:
# B is 512x8, A is 512x512 with about 16 entries per row; the A window of
# MaxMemory doubles from 8400 bytes, so every cut set contains the next one's
MERGE_SWEEP = [4 * 8400 * 2**j for j in range(6)]


def _sweep_operands():
    a = random_sparse(512, 512, 16 / 512, 0)
    b = csr_to_csc(random_sparse(512, 8, 0.125, 50))
    return a, b


def _record(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_oracle_equivalence():
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    worst = 0.0
    bad = 0
    for _ in range(1000):
        n, k, m = (int(x) for x in rng.integers(1, 201, 3))
        a = rand_csr(rng, n, k, rng.uniform(0.01, 0.5))
        b = rand_csr(rng, k, m, rng.uniform(0.01, 0.5))
        got = to_dense(spgemm_full(a, csr_to_csc(b))).data
        ref = dense_oracle(to_dense(a), to_dense(b)).data
        err = np.abs(got - ref)
        scale = np.abs(ref)
        nz = scale > 0
        rel = float((err[nz] / scale[nz]).max()) if nz.any() else 0.0
        worst = max(worst, rel)
        # entries that are exactly zero in the oracle must be exactly zero here
        if rel > 1e-12 or err[~nz].any():
            bad += 1
    elapsed = time.perf_counter() - t0
    _record(1, bad == 0 and elapsed < 60,
            f"1000 pairs, max relative error {worst:.3g} (tol 1e-12), {bad} mismatches, {elapsed:.1f}s (limit 60s)")


def _aires_floor(a, b, hi):
    """Smallest device budget at which run_aires completes (bisection)."""
    m_c = estimate_output_memory(matrix_stats(a), matrix_stats(b))
    lo = m_c + estimate_b_memory(matrix_stats(b))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if run_strategy("aires", a, b, MemoryBudget(mid))[1].oom:
            lo = mid
        else:
            hi = mid
    return hi


def test_criterion_02_partition_invariance():
    rng = np.random.default_rng(7)
    cells = mismatches = ooms = 0
    seg_counts = []
    for i in range(100):
        n = int(rng.integers(8, 121))
        m = int(rng.integers(1, 41))
        a = rand_csr(rng, n, n, rng.uniform(0.02, 0.3))
        b = csr_to_csc(rand_csr(rng, n, m, rng.uniform(0.02, 0.5)))
        ref = checksum(spgemm_full(a, b))
        # five budgets from the smallest AIRES can run with up to a roomy one
        hi = generous_budget(a, b)
        lo = _aires_floor(a, b, hi)
        for bud in np.unique(np.geomspace(lo, hi, 5).astype(int)):
            cells += 1
            _, rep = run_strategy("aires", a, b, MemoryBudget(int(bud)))
            if rep.oom:
                ooms += 1
                continue
            mismatches += rep.c_checksum != ref
            seg_counts.append(rep.segments)
    _record(2, cells == 500 and mismatches == 0 and ooms == 0,
            f"{cells} (matrix, budget) cells, {mismatches} checksum mismatches, {ooms} infeasible, "
            f"segments per run {min(seg_counts, default=0)}..{max(seg_counts, default=0)}")


def test_criterion_03_algorithm_fidelity():
    nnz = [2, 3, 1, 3]
    rows = np.repeat(np.arange(4), nnz)
    cols = np.concatenate([np.arange(k) for k in nnz])
    a = csr_from_triplets(rows, cols, np.arange(1.0, 10.0), 4, 4)
    ok = True
    detail = []
    for backend in ("numpy", "numba"):
        segs = robw_partition(a, 120, backend=backend)
        spans = [(s.start_row, s.end_row) for s in segs]
        ok &= spans == [(0, 2), (2, 4)]
        ok &= concat_segments(segs, 4, 4) == a
        ok &= all(s.byte_size <= 120 for s in segs)
        detail.append(f"{backend}: {spans} sizes {[s.byte_size for s in segs]}")
    _record(3, ok, "; ".join(detail) + " (expect rows 0-1, 2-3, each <= 120)")


def test_criterion_04_estimator_values():
    m_c = estimate_output_memory(MatrixStats(800, 90), MatrixStats(400, 95))
    m_b = estimate_b_memory(MatrixStats(400, 0, 100, 400))
    p = block_budget(MemoryBudget(2272), 372, 900).per_array
    _record(4, (m_c, m_b, p) == (372, 900, 333), f"M_C={m_c} (372), M_B={m_b} (900), p={p} (333)")


def _sweep_reports():
    a, b = _sweep_operands()
    return compare_strategies(a, b, MERGE_SWEEP)


def _by_strategy(reports, strategy):
    return [r for r in reports if r.strategy == strategy]


def test_criterion_05_merge_overhead():
    reports = _sweep_reports()
    mm = _by_strategy(reports, "maxmemory")
    ai = _by_strategy(reports, "aires")
    shares = [r.merge_share for r in mm]
    completed = all(not r.oom for r in mm + ai)
    positive = any(r.ledger.merge_bytes > 0 and s > 0 for r, s in zip(mm, shares))
    monotone = all(x >= y for x, y in zip(shares, shares[1:]))
    aires_zero = all(r.ledger.merge_bytes == 0 for r in ai)
    _record(5, completed and positive and monotone and aires_zero,
            "maxmemory merge share by budget " + ", ".join(f"{r.budget_bytes}:{s:.4f}" for r, s in zip(mm, shares))
            + f"; aires merge_bytes {[r.ledger.merge_bytes for r in ai]}")


def _desk_reports():
    out = {}
    for name in CONSTRAINT_SWEEP:
        inst = desk_instance(name)
        out[name] = compare_strategies(inst.a, inst.b, inst.budgets())
    return out


def test_criterion_06_transferred_bytes():
    cells = []
    reports = _sweep_reports()
    for rs in _desk_reports().values():
        reports += rs
    pairs = []
    for i in range(0, len(reports), 2):
        ai, mm = reports[i], reports[i + 1]
        assert ai.strategy == "aires" and mm.strategy == "maxmemory" and ai.budget_bytes == mm.budget_bytes
        if ai.oom or mm.oom:
            continue
        pairs.append((ai, mm))
    ok = bool(pairs)
    for ai, mm in pairs:
        if mm.ledger.merge_bytes > 0:
            ok &= ai.host_device_bytes < mm.host_device_bytes
        else:
            ok &= ai.host_device_bytes <= mm.host_device_bytes
        cells.append(f"{ai.budget_bytes}:{ai.host_device_bytes}/{mm.host_device_bytes}")
    _record(6, ok, f"{len(pairs)} cells, aires/maxmemory host<->device bytes " + ", ".join(cells))


def test_criterion_07_feasibility_dominance():
    ok = True
    parts = []
    for name, reports in _desk_reports().items():
        ai = _by_strategy(reports, "aires")
        mm = _by_strategy(reports, "maxmemory")
        witness = any(m.oom and not a.oom for a, m in zip(ai, mm))
        dominance = all(not a.oom for a, m in zip(ai, mm) if not m.oom)
        ok &= witness and dominance
        pattern = " ".join(f"{a.budget_bytes}:{'ok' if not a.oom else '-'}/{'ok' if not m.oom else '-'}"
                           for a, m in zip(ai, mm))
        parts.append(f"{name} [{pattern}]")
    _record(7, ok, "aires/maxmemory per budget: " + "; ".join(parts))


def test_criterion_08_speedup_direction():
    reports = _sweep_reports()
    for rs in _desk_reports().values():
        reports += rs
    ok = True
    ratios = []
    checked = 0
    for i in range(0, len(reports), 2):
        ai, mm = reports[i], reports[i + 1]
        if ai.oom or mm.oom:
            continue
        ratios.append(f"{ai.budget_bytes}:{mm.total_s / ai.total_s:.3f}")
        if mm.ledger.merge_bytes > 0:
            checked += 1
            ok &= ai.total_s <= mm.total_s
    ok &= checked > 0
    _record(8, ok, f"{checked} cells with merges; realized maxmemory/aires time ratios " + ", ".join(ratios))


def test_criterion_09_gcn():
    edge = csr_from_triplets([0, 1], [1, 0], [1.0, 1.0], 2, 2)
    exact = to_dense(normalize_adjacency(edge).a_tilde).data.tolist() == [[0.5, 0.5], [0.5, 0.5]]
    rng = np.random.default_rng(99)
    worst = 0.0
    runs = 0
    for dim in (16, 64, 256):
        for trial in range(4):
            n = int(rng.integers(16, 65))
            a = random_symmetric(n, float(rng.uniform(0.05, 0.3)), 1000 * dim + trial)
            h = random_features(n, dim, 90.0, 2000 * dim + trial)
            w = DenseMatrix.from_array(rng.standard_normal((dim, 16)))
            got = to_dense(layer_forward(a, h, GcnLayerSpec(w, feature_dim=dim)).h).data
            ref = dense_layer_oracle(to_dense(a), to_dense(h), w).data
            scale = np.maximum(np.abs(ref), np.finfo(float).tiny)
            err = np.abs(got - ref)
            worst = max(worst, float((err / scale).max()))
            runs += 1
    _record(9, exact and worst <= 1e-12,
            f"2-node normalisation exact={exact}; {runs} layers over dims 16/64/256, max relative error {worst:.3g}")


def test_criterion_10_simulator_audit():
    a, b = _sweep_operands()
    traces = 0
    ok = True
    inst = desk_instance("socLJ1")
    cases = [(a, b, bud) for bud in MERGE_SWEEP] + [(inst.a, inst.b, bud) for bud in inst.budgets()]
    for x, y, bud in cases:
        for runner in (run_aires, run_maxmemory):
            try:
                _, rep = runner(x, y, MemoryBudget(bud))
            except Exception:
                continue
            traces += 1
            folded = fold_ledger(rep.trace, rep.config)
            for ch, tot in rep.ledger.channels.items():
                f = folded.channels[ch]
                ok &= (f.count, f.nbytes, f.seconds) == (tot.count, tot.nbytes, tot.seconds)
            ok &= folded.merge_bytes == rep.ledger.merge_bytes
            ok &= folded.peak_device == rep.ledger.peak_device <= bud
            try:
                check_trace(rep.trace, bud)
            except AssertionError:
                ok = False
            ok &= math.isclose(sum(rep.phase_s), rep.total_s, rel_tol=1e-12)
            _, again = runner(x, y, MemoryBudget(bud))
            ok &= reports_csv([rep]) == reports_csv([again])
            ok &= _trace_csv(rep) == _trace_csv(again)
    _record(10, ok and traces > 0,
            f"{traces} traces: ledger refolds match, occupancy within budget, reruns byte-identical")


def _trace_csv(rep):
    return "\n".join(",".join(map(str, ev.row())) for ev in rep.trace)


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion"):
            try:
                fn()
            except AssertionError:
                pass
