"""Hybrid SpMM over the two-part tile format.

The dense path decodes each window's bitmap blocks into 8x8 fragments,
gathers the 8 B rows each block names, and multiplies the whole window as
one (8 x 8k) by (8k x d) dense product. The scalar path streams residual
rows as fused multiply-adds. The two paths write disjoint output rows, so
any worker assignment yields the same C.

Split segments of one logical window cover consecutive entries and a
contiguous block range, so execution groups them back together; the block
sequence a window multiplies is therefore independent of how it was split,
which makes results bit-identical across max_blocks_per_item settings, for
both 32-bit and 64-bit accumulation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import CsrMatrix, DenseMatrix, _lock, max_relative_error, oracle_spmm
from .tile import FormatError, RsTileMatrix, decode_rstile, popcounts

ORACLE_TOLERANCE = 1e-5


class VerificationError(ArithmeticError):
    """The executor's result diverged from the reference beyond tolerance."""


@dataclass(frozen=True)
class ExecConfig:
    num_workers: int = 1
    check_against_oracle: bool = False
    accumulate_precision: str = "f32"

    def __post_init__(self) -> None:
        if self.num_workers < 1:
            raise ValueError(f"num_workers must be >= 1, got {self.num_workers}")
        if self.accumulate_precision not in ("f32", "f64"):
            raise ValueError(
                f"accumulate_precision must be f32 or f64, got {self.accumulate_precision!r}"
            )

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float64 if self.accumulate_precision == "f64" else np.float32)


@dataclass(frozen=True)
class Fragment8x8:
    """Dense row-major 8x8 expansion of one bitmap block."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.shape != (8, 8):
            raise ValueError(f"fragment must be 8x8, got {arr.shape}")
        object.__setattr__(self, "data", _lock(arr))


def _expand_blocks(bitmaps: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Scatter packed values into dense (n, 8, 8) fragments, bit order."""
    n = bitmaps.size
    as_bytes = np.ascontiguousarray(bitmaps, dtype="<u8").view(np.uint8)
    bits = np.unpackbits(as_bytes, bitorder="little").reshape(n, 64)
    flat = np.zeros((n, 64), dtype=np.float32)
    blk, bit = np.nonzero(bits)
    if blk.size != values.size:
        raise ValueError(
            f"value count {values.size} does not match {blk.size} set bits"
        )
    flat[blk, bit] = values
    return flat.reshape(n, 8, 8)


def decode_tile(bitmap: int, values: np.ndarray) -> Fragment8x8:
    """Expand one bitmap block; values must match its set-bit count."""
    bm = np.array([bitmap], dtype=np.uint64)
    vals = np.asarray(values, dtype=np.float32)
    expected = int(popcounts(bm)[0])
    if vals.size != expected:
        raise ValueError(
            f"bitmap has {expected} set bits but {vals.size} values were given"
        )
    return Fragment8x8(_expand_blocks(bm, vals)[0])


def _gather_rows(b: DenseMatrix, cols: np.ndarray) -> np.ndarray:
    if cols.size and (int(cols.min()) < 0 or int(cols.max()) >= b.n_rows):
        raise FormatError("col_id references a column outside B's row range")
    return b.data[cols]


def exec_tc_window(
    m: RsTileMatrix, entry: int, b: DenseMatrix, c_out: np.ndarray
) -> None:
    """Accumulate one window entry's block products into a local 8 x d array."""
    if not 0 <= entry < m.tc.n_entries:
        raise IndexError(f"entry {entry} out of range")
    bs = int(m.tc.row_window_offset[entry])
    be = int(m.tc.row_window_offset[entry + 1])
    if bs == be:
        return
    pops = popcounts(m.tc.bitmaps[bs:be])
    vs = int(np.sum(popcounts(m.tc.bitmaps[:bs])))
    frags = _expand_blocks(m.tc.bitmaps[bs:be], m.tc.values[vs:vs + int(pops.sum())])
    gathered = _gather_rows(b, m.tc.col_id[bs * 8:be * 8])
    a_row = frags.transpose(1, 0, 2).reshape(8, (be - bs) * 8)
    prec = c_out.dtype
    c_out += a_row.astype(prec, copy=False) @ gathered.astype(prec, copy=False)


def exec_residual(m: RsTileMatrix, b: DenseMatrix, c: np.ndarray) -> None:
    """Stream residual rows: c[r] += v * b[col] per stored entry."""
    res = m.residual
    if res.col_id.size and (
        int(res.col_id.min()) < 0 or int(res.col_id.max()) >= b.n_rows
    ):
        raise FormatError("residual col_id references a column outside B")
    prec = c.dtype
    for i in range(res.n_rows):
        lo = int(res.row_nnz_offset[i])
        hi = int(res.row_nnz_offset[i + 1])
        if lo == hi:
            continue
        row = res.values[lo:hi].astype(prec, copy=False) @ b.data[
            res.col_id[lo:hi]
        ].astype(prec, copy=False)
        c[int(res.row_id[i])] += row


def _window_groups(m: RsTileMatrix) -> list[tuple[int, int, int]]:
    """(row_window_id, block_start, block_end) per logical window.

    Consecutive entries sharing a row_window_id are segments of one split
    window; their block ranges are contiguous, so they merge back into a
    single range.
    """
    rwid = m.tc.row_window_id
    if rwid.size == 0:
        return []
    heads = np.flatnonzero(np.concatenate([[True], rwid[1:] != rwid[:-1]]))
    bounds = np.concatenate([heads, [rwid.size]])
    off = m.tc.row_window_offset
    return [
        (int(rwid[heads[i]]), int(off[bounds[i]]), int(off[bounds[i + 1]]))
        for i in range(heads.size)
    ]


def hybrid_spmm(m: RsTileMatrix, b: DenseMatrix, cfg: ExecConfig | None = None) -> DenseMatrix:
    """Multiply the tiled matrix by dense B, merging both execution paths."""
    cfg = cfg or ExecConfig()
    if b.n_rows != m.n_cols:
        raise ValueError(
            f"dimension mismatch: matrix has {m.n_cols} columns, B has {b.n_rows} rows"
        )
    prec = cfg.dtype
    c = np.zeros((m.n_rows, b.n_cols), dtype=prec)
    tc = m.tc

    groups = _window_groups(m)
    vstarts = np.zeros(tc.n_blocks + 1, dtype=np.int64)
    np.cumsum(popcounts(tc.bitmaps), out=vstarts[1:])
    bdata = b.data.astype(prec, copy=False)

    def run_window(g: tuple[int, int, int]) -> None:
        rid, bs, be = g
        if bs == be:
            return
        frags = _expand_blocks(
            tc.bitmaps[bs:be], tc.values[vstarts[bs]:vstarts[be]]
        )
        gathered = _gather_rows(b, tc.col_id[bs * 8:be * 8]).astype(prec, copy=False)
        a_row = frags.transpose(1, 0, 2).reshape(8, (be - bs) * 8).astype(prec, copy=False)
        out = a_row @ gathered
        avail = min(m.window_size, m.n_rows - rid)
        c[rid:rid + avail] = out[:avail]

    def run_residual_slice(lo: int, hi: int) -> None:
        res = m.residual
        for i in range(lo, hi):
            s = int(res.row_nnz_offset[i])
            e = int(res.row_nnz_offset[i + 1])
            if s == e:
                continue
            c[int(res.row_id[i])] = res.values[s:e].astype(prec, copy=False) @ bdata[
                res.col_id[s:e]
            ]

    n_res = m.residual.n_rows
    if m.residual.col_id.size and (
        int(m.residual.col_id.min()) < 0
        or int(m.residual.col_id.max()) >= b.n_rows
    ):
        raise FormatError("residual col_id references a column outside B")

    if cfg.num_workers == 1:
        for g in groups:
            run_window(g)
        run_residual_slice(0, n_res)
    else:
        res_cuts = np.linspace(0, n_res, cfg.num_workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=cfg.num_workers) as pool:
            futures = [pool.submit(run_window, g) for g in groups]
            futures += [
                pool.submit(run_residual_slice, int(lo), int(hi))
                for lo, hi in zip(res_cuts[:-1], res_cuts[1:])
                if lo < hi
            ]
            for f in futures:
                f.result()

    result = DenseMatrix.from_array(c.astype(np.float32, copy=False))
    if cfg.check_against_oracle:
        reference = oracle_spmm(decode_rstile(m), b)
        err = max_relative_error(result.data, reference.data)
        if err > ORACLE_TOLERANCE:
            raise VerificationError(
                f"max relative error {err:.3e} exceeds {ORACLE_TOLERANCE:.0e}"
            )
    return result
