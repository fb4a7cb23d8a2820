"""Command-line entry point: ``oocgemm convert|gen|multiply|gcn|bench-merge``.

Exit codes are a stable contract: 0 success, 1 usage, 2 parse error,
3 out-of-memory in at least one reported cell.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .datasets import random_features, random_symmetric
from .errors import (
    CapacityExceeded,
    DimensionMismatch,
    InsufficientDeviceMemory,
    InvalidDensity,
    ParseError,
    RowTooLarge,
    UnsupportedFormat,
)
from .gcn import Engine, GcnLayerSpec, layer_forward, load_weight
from .memory import MemoryBudget
from .scheduler import STRATEGIES, RunReport, checksum, compare_strategies, generous_budget, reports_csv, speedups
from .sim import SimConfig, parse_bytes, read_config, sim_config_from
from .sparse import CscMatrix, DenseMatrix, ElementSizes, byte_size, csr_to_csc, load_matrix, save_csr

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_OOM = 0, 1, 2, 3
DEFAULT_FEATURE_DIM = 256


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for parse errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    sizes: ElementSizes = field(default_factory=ElementSizes)
    device_bytes: Optional[int] = None
    host_bytes: int = 1 << 40
    budgets: List[int] = field(default_factory=list)
    strategies: tuple = STRATEGIES
    seed: int = 0
    feature_dims: List[int] = field(default_factory=list)
    feature_sparsity: float = 99.0
    out: Path = Path(".")
    jobs: int = 1

    def budgets_for(self, a, b) -> List[int]:
        if self.budgets:
            return self.budgets
        if self.device_bytes is not None:
            return [self.device_bytes]
        return [generous_budget(a, b, self.sizes)]


def _int_list(text: str) -> List[int]:
    try:
        vals = [int(float(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file with [memory], [channels], [cost], [io]")
    common.add_argument("--budget", type=_int_list, help="device bytes, comma-separated for a sweep")
    common.add_argument("--strategy", choices=(*STRATEGIES, "all"),
                        help="default: all for multiply, aires for gcn")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--feature-dim", type=_int_list, help="generate B/H with these column counts")
    common.add_argument("--feature-sparsity", type=float, default=99.0, help="percent zeros in generated features")
    common.add_argument("--out", type=Path, default=Path("."))
    common.add_argument("--jobs", type=int, default=1, help="sweep cells run in parallel")

    p = _Parser(prog="oocgemm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("convert", parents=[common], help="Matrix Market -> binary CSR container")
    s.add_argument("input", type=Path)
    s.add_argument("output", type=Path)

    s = sub.add_parser("gen", parents=[common], help="seeded random symmetric matrix")
    s.add_argument("n", type=int)
    s.add_argument("density", type=float)
    s.add_argument("output", type=Path)

    s = sub.add_parser("multiply", parents=[common], help="C = A @ B under each strategy and budget")
    s.add_argument("a", type=Path)
    s.add_argument("b", type=Path, nargs="?", help="defaults to A unless --feature-dim is given")

    s = sub.add_parser("gcn", parents=[common], help="one GCN layer forward pass")
    s.add_argument("a", type=Path)
    s.add_argument("--h", type=Path, help="feature matrix; generated from --feature-dim if absent")
    s.add_argument("--w", required=True, help="weight file, 'identity', or 'random:<out_dim>'")

    s = sub.add_parser("bench-merge", parents=[common], help="merge overhead across a budget sweep")
    s.add_argument("a", type=Path)
    s.add_argument("b", type=Path, nargs="?")
    return p


def experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config is not None:
        cp = read_config(args.config)
        cfg.sim = sim_config_from(cp)
        if cp.has_section("memory"):
            mem = cp["memory"]
            if "device_bytes" in mem:
                cfg.device_bytes = parse_bytes(mem["device_bytes"])
            if "host_bytes" in mem:
                cfg.host_bytes = parse_bytes(mem["host_bytes"])
        if cp.has_section("io"):
            sec = cp["io"]
            cfg.sizes = ElementSizes(sec.getint("index_bytes", 8), sec.getint("value_bytes", 8))
            if "out" in sec and args.out == Path("."):
                args.out = Path(sec["out"])
    cfg.budgets = args.budget or []
    strategy = args.strategy or ("aires" if args.command == "gcn" else "all")
    cfg.strategies = STRATEGIES if strategy == "all" else (strategy,)
    cfg.seed = args.seed
    cfg.feature_dims = args.feature_dim or []
    cfg.feature_sparsity = args.feature_sparsity
    cfg.out = args.out
    cfg.jobs = max(1, args.jobs)
    return cfg


def _features(n, dim, cfg, salt=1) -> CscMatrix:
    return random_features(n, dim, cfg.feature_sparsity, cfg.seed + salt)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_convert(args, cfg) -> int:
    a = load_matrix(args.input)
    save_csr(args.output, a)
    print(f"rows={a.n_rows} cols={a.n_cols} nnz={a.nnz} bytes={byte_size(a, cfg.sizes)}")
    return EXIT_OK


def cmd_gen(args, cfg) -> int:
    a = random_symmetric(args.n, args.density, cfg.seed)
    save_csr(args.output, a)
    print(f"rows={a.n_rows} cols={a.n_cols} nnz={a.nnz} bytes={byte_size(a, cfg.sizes)}")
    return EXIT_OK


def _operands(args, cfg):
    a = load_matrix(args.a)
    if args.b is not None:
        return a, csr_to_csc(load_matrix(args.b))
    if cfg.feature_dims:
        return a, _features(a.n_cols, cfg.feature_dims[0], cfg)
    return a, csr_to_csc(a)


def cmd_multiply(args, cfg) -> int:
    a, b = _operands(args, cfg)
    reports = compare_strategies(
        a, b, cfg.budgets_for(a, b), cfg.sim, sizes=cfg.sizes, host_total=cfg.host_bytes,
        strategies=cfg.strategies, jobs=cfg.jobs,
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "report.csv").write_text(reports_csv(reports))
    done = [r for r in reports if not r.oom]
    if done:
        from .spgemm import spgemm_full

        c = spgemm_full(a, b)
        if any(r.c_checksum != checksum(c) for r in done):
            raise AssertionError("out-of-core result differs from the in-core product")
        save_csr(cfg.out / "C.csr", c)
    for r in reports:
        state = "oom" if r.oom else f"{r.total_s:.6e}s merge_bytes={r.ledger.merge_bytes}"
        print(f"{r.strategy} budget={r.budget_bytes} {state}")
    for bud, ratio in sorted(speedups(reports).items()):
        print(f"speedup budget={bud} maxmemory/aires={ratio:.4f}")
    return EXIT_OOM if any(r.oom for r in reports) else EXIT_OK


def _weight(arg: str, in_dim: int, seed: int) -> DenseMatrix:
    if arg == "identity":
        return DenseMatrix.from_array(np.eye(in_dim))
    if arg.startswith("random:"):
        try:
            out_dim = int(arg.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad weight argument {arg!r}")
        rng = np.random.default_rng(seed + 2)
        return DenseMatrix.from_array(rng.standard_normal((in_dim, out_dim)) / np.sqrt(in_dim))
    path = Path(arg)
    if not path.exists():
        raise UsageError(f"weight file {arg} does not exist")
    return load_weight(path)


def cmd_gcn(args, cfg) -> int:
    a = load_matrix(args.a)
    if args.h is not None:
        hs = [csr_to_csc(load_matrix(args.h))]
    else:
        dims = cfg.feature_dims or [DEFAULT_FEATURE_DIM]
        hs = [_features(a.n_rows, d, cfg) for d in dims]
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows, extra = [], {"feature_dim": [], "h_out_nnz": []}
    oom = False
    for h in hs:
        w = _weight(args.w, h.n_cols, cfg.seed)
        if w.n_rows != h.n_cols:
            raise DimensionMismatch(f"weight has {w.n_rows} rows, features have {h.n_cols} columns")
        layer = GcnLayerSpec(w, feature_dim=h.n_cols, feature_sparsity_pct=cfg.feature_sparsity)
        for strategy in cfg.strategies:
            for bud in cfg.budgets_for(a, h):
                engine = Engine(strategy, MemoryBudget(bud, cfg.host_bytes, cfg.sizes), cfg.sim)
                try:
                    res = layer_forward(a, h, layer, engine)
                except (InsufficientDeviceMemory, RowTooLarge, CapacityExceeded) as exc:
                    oom = True
                    rows.append(RunReport(strategy, bud, oom=True, error=str(exc)))
                    extra["feature_dim"].append(h.n_cols)
                    extra["h_out_nnz"].append("")
                    continue
                rows.append(res.report)
                extra["feature_dim"].append(h.n_cols)
                extra["h_out_nnz"].append(res.h.nnz)
                save_csr(cfg.out / f"H_{h.n_cols}.csr", res.h)
                print(f"feature_dim={h.n_cols} {strategy} budget={bud} total={res.report.total_s:.6e}s "
                      f"h_nnz={res.h.nnz}")
    (cfg.out / "gcn_report.csv").write_text(reports_csv(rows, extra))
    return EXIT_OOM if oom else EXIT_OK


BENCH_COLUMNS = (
    "budget_bytes", "maxmemory_merge_bytes", "maxmemory_merge_share", "maxmemory_total_s",
    "aires_merge_bytes", "aires_total_s", "speedup", "maxmemory_oom", "aires_oom",
)


def bench_merge_rows(reports):
    by = {}
    for r in reports:
        by.setdefault(r.budget_bytes, {})[r.strategy] = r
    out = []
    for bud in sorted(by):
        mm, ai = by[bud].get("maxmemory"), by[bud].get("aires")
        ok_mm = mm is not None and not mm.oom
        ok_ai = ai is not None and not ai.oom
        out.append((
            bud,
            mm.ledger.merge_bytes if ok_mm else "",
            repr(mm.merge_share) if ok_mm else "",
            repr(mm.total_s) if ok_mm else "",
            ai.ledger.merge_bytes if ok_ai else "",
            repr(ai.total_s) if ok_ai else "",
            repr(mm.total_s / ai.total_s) if ok_mm and ok_ai and ai.total_s > 0 else "",
            int(not ok_mm), int(not ok_ai),
        ))
    return out


def cmd_bench_merge(args, cfg) -> int:
    if not cfg.budgets:
        raise UsageError("bench-merge needs --budget")
    a, b = _operands(args, cfg)
    reports = compare_strategies(a, b, cfg.budgets, cfg.sim, sizes=cfg.sizes, host_total=cfg.host_bytes,
                                 jobs=cfg.jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    w.writerows(bench_merge_rows(reports))
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "merge_overhead.csv").write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "convert": cmd_convert,
    "gen": cmd_gen,
    "multiply": cmd_multiply,
    "gcn": cmd_gcn,
    "bench-merge": cmd_bench_merge,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = experiment_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, UnsupportedFormat, configparser.Error) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InvalidDensity, DimensionMismatch, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
