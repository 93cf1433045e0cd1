"""Command-line front end.

All non-timing output goes to stdout and is deterministic for fixed inputs
and flags; wall-clock timings and throughput numbers go to stderr so runs
can be diffed. Exit codes: 0 success, 1 internal invariant violation,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .core import CsrMatrix, DenseMatrix, oracle_spmm, max_relative_error, row_stats
from .execute import ExecConfig, VerificationError, hybrid_spmm
from .metrics import sweep_csv, threshold_sweep, tile_density
from .mmio import (
    MatrixMarketError,
    read_dense,
    read_matrix_market,
    write_dense,
    write_matrix_market,
)
from .partition import PartitionParams, partition_rows, split_long_work
from .reorder import (
    ReorderParams,
    column_weights,
    permutation_objective,
    reorder_pipeline,
    save_permutation,
)
from .tile import (
    RSTILE_MAGIC,
    FormatError,
    RsTileMatrix,
    build_rstile,
    decode_rstile,
    load_rstile,
    save_rstile,
    storage_report,
)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RSTILE_WORKERS", "1")))
    except ValueError:
        return 1


def _partition_params(args: argparse.Namespace) -> PartitionParams:
    max_blocks = args.max_blocks if args.max_blocks > 0 else None
    return PartitionParams(
        window_size=args.window_size,
        tau_nnz=args.tau_nnz,
        tau_inc=args.tau_inc,
        max_blocks_per_item=max_blocks,
    )


def _build_from_csr(a: CsrMatrix, params: PartitionParams) -> RsTileMatrix:
    plan = split_long_work(a, partition_rows(a, params), params)
    return build_rstile(a, plan)


def _load_any(path: str, params: PartitionParams) -> RsTileMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == RSTILE_MAGIC:
        return load_rstile(path)
    return _build_from_csr(read_matrix_market(path), params)


def _make_b(m: RsTileMatrix, args: argparse.Namespace) -> DenseMatrix:
    if args.b:
        b = read_dense(args.b)
        if b.n_rows != m.n_cols:
            raise ValueError(
                f"B has {b.n_rows} rows but the matrix has {m.n_cols} columns"
            )
        return b
    rng = np.random.default_rng(args.seed)
    data = rng.uniform(-1.0, 1.0, (m.n_cols, args.d)).astype(np.float32)
    return DenseMatrix.from_array(data)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_stats(args: argparse.Namespace) -> int:
    a = read_matrix_market(args.input)
    stats = row_stats(a)
    _emit(
        {
            "n_rows": a.n_rows,
            "n_cols": a.n_cols,
            "nnz": a.nnz,
            "nnz_mean": stats.nnz_mean,
            "nnz_max": stats.nnz_max,
            "long_row_ratio_2x": stats.long_row_ratio_2x,
            "long_row_ratio_4x": stats.long_row_ratio_4x,
        }
    )
    return 0


def cmd_reorder(args: argparse.Namespace) -> int:
    a = read_matrix_market(args.input)
    params = ReorderParams(alpha=args.alpha, k=args.k)
    before = permutation_objective(a, column_weights(a, args.alpha), np.arange(a.n_rows))
    perm, reordered = reorder_pipeline(a, params)
    out = Path(args.output)
    write_matrix_market(out, reordered)
    save_permutation(out.with_suffix(out.suffix + ".perm"), perm)
    _emit(
        {
            "objective_before": before,
            "objective_after": perm.objective,
            "n_rows": a.n_rows,
            "output": str(out),
            "permutation": str(out.with_suffix(out.suffix + ".perm")),
        }
    )
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    a = read_matrix_market(args.input)
    m = _build_from_csr(a, _partition_params(args))
    save_rstile(args.output, m)
    _emit(
        {
            "storage": asdict(storage_report(a, m)),
            "density": asdict(tile_density(m)),
            "output": args.output,
        }
    )
    return 0


def cmd_spmm(args: argparse.Namespace) -> int:
    m = _load_any(args.input, _partition_params(args))
    b = _make_b(m, args)
    cfg = ExecConfig(num_workers=args.workers, accumulate_precision=args.accum)
    start = time.perf_counter()
    c = hybrid_spmm(m, b, cfg)
    elapsed = time.perf_counter() - start
    nnz = int(m.tc.values.size) + int(m.residual.values.size)
    gflops = 2.0 * nnz * b.n_cols / elapsed / 1e9 if elapsed > 0 else 0.0
    print(f"spmm: {elapsed:.6f} s, {gflops:.3f} GFLOP/s", file=sys.stderr)

    payload = {
        "n_rows": m.n_rows,
        "n_cols": m.n_cols,
        "d": b.n_cols,
        "nnz": nnz,
        "workers": args.workers,
        "accumulate_precision": args.accum,
        "output": args.output,
    }
    if args.check:
        reference = oracle_spmm(decode_rstile(m), b)
        err = float(max_relative_error(c.data, reference.data))
        payload["max_relative_error"] = err
        if err > 1e-5:
            raise VerificationError(
                f"max relative error {err:.3e} exceeds 1e-05"
            )
    if args.output:
        write_dense(args.output, c)
    _emit(payload)
    return 0


def cmd_partition_sweep(args: argparse.Namespace) -> int:
    a = read_matrix_market(args.input)
    lo, sep, hi = args.tau_range.partition(":")
    if not sep:
        raise ValueError(f"--tau-range must be MIN:MAX, got {args.tau_range!r}")
    tau_lo, tau_hi = int(lo), int(hi)
    if tau_lo > tau_hi:
        raise ValueError(f"--tau-range is empty: {args.tau_range!r}")
    rows = threshold_sweep(a, list(range(tau_lo, tau_hi + 1)), _partition_params(args))
    if args.format == "csv":
        text = sweep_csv(rows)
    else:
        text = json.dumps(
            [{"tau": tau, **asdict(rep)} for tau, rep in rows],
            sort_keys=True,
            indent=2,
        ) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    corpus = sorted(Path(args.input).glob("*.mtx"))
    if not corpus:
        print(f"bench: no .mtx files in {args.input}", file=sys.stderr)
        _emit({"matrices": []})
        return 0
    params = _partition_params(args)
    cfg = ExecConfig(num_workers=args.workers, accumulate_precision=args.accum)
    entries = []
    total_time = 0.0
    for path in corpus:
        try:
            a = read_matrix_market(path)
        except (MatrixMarketError, OSError) as exc:
            print(f"bench: skipping {path}: {exc}", file=sys.stderr)
            continue
        m = _build_from_csr(a, params)
        b = _make_b(m, args)
        start = time.perf_counter()
        c = hybrid_spmm(m, b, cfg)
        elapsed = time.perf_counter() - start
        total_time += elapsed
        print(f"bench: {path.name} {elapsed:.6f} s", file=sys.stderr)
        density = tile_density(m)
        storage = storage_report(a, m)
        entry = {
            "name": path.name,
            "n_rows": a.n_rows,
            "n_cols": a.n_cols,
            "nnz": a.nnz,
            "block_count": density.block_count,
            "mean_nnz_per_block": density.mean_nnz_per_block,
            "residual_nnz_fraction": density.residual_nnz_fraction,
            "rstile_bytes": storage.rstile_bytes,
            "csr_bytes": storage.csr_bytes,
        }
        if args.check:
            ref = oracle_spmm(decode_rstile(m), b)
            entry["max_relative_error"] = max_relative_error(c, ref)
        entries.append(entry)
    print(f"bench: total {total_time:.6f} s", file=sys.stderr)
    _emit({"matrices": entries})
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_partition_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-nnz", type=int, default=None,
                   help="residual row-nnz threshold (default: auto)")
    p.add_argument("--tau-inc", type=int, default=None,
                   help="column-increment threshold (default: auto)")
    p.add_argument("--window-size", type=int, default=8,
                   help="rows per window, 1..8 (default 8)")
    p.add_argument("--max-blocks", type=int, default=64,
                   help="block bound per work item; 0 disables splitting")


def _add_exec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=64, help="dense column count (default 64)")
    p.add_argument("--seed", type=int, default=0, help="seed for the generated B")
    p.add_argument("--b", default=None, help="read B from a DMAT file instead")
    p.add_argument("--workers", type=int, default=_default_workers(),
                   help="worker threads (default: RSTILE_WORKERS or 1)")
    p.add_argument("--accum", choices=("f32", "f64"), default="f32",
                   help="accumulation precision (default f32)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rstile",
        description="Row-windowed bitmap tiles: convert, reorder, multiply, measure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="row-length statistics of a .mtx matrix")
    p.add_argument("input")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("reorder", help="locality-aware row reordering")
    p.add_argument("input")
    p.add_argument("--alpha", type=float, default=0.5, help="column weight exponent")
    p.add_argument("--k", type=int, default=8, help="neighbors per row")
    p.add_argument("--output", required=True, help="reordered .mtx path")
    p.set_defaults(func=cmd_reorder)

    p = sub.add_parser("convert", help="build and serialize the tile format")
    p.add_argument("input")
    _add_partition_flags(p)
    p.add_argument("--output", required=True, help="tile file path")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("spmm", help="multiply by a dense matrix")
    p.add_argument("input", help=".mtx or tile file")
    _add_partition_flags(p)
    _add_exec_flags(p)
    p.add_argument("--check", action="store_true",
                   help="compare against the dense reference")
    p.add_argument("--output", default=None, help="write C as a DMAT file")
    p.set_defaults(func=cmd_spmm)

    p = sub.add_parser("partition-sweep", help="density metrics across thresholds")
    p.add_argument("input")
    _add_partition_flags(p)
    p.add_argument("--tau-range", default="0:8", help="inclusive MIN:MAX (default 0:8)")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--output", default=None, help="write the report here instead of stdout")
    p.set_defaults(func=cmd_partition_sweep)

    p = sub.add_parser("bench", help="convert and multiply every .mtx in a directory")
    p.add_argument("input", help="corpus directory")
    _add_partition_flags(p)
    _add_exec_flags(p)
    p.add_argument("--check", action="store_true",
                   help="report the dense-reference error per matrix")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, VerificationError) as exc:
        print(f"rstile: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"rstile: {exc}", file=sys.stderr)
        return 2


def main_entry() -> None:
    raise SystemExit(main())
