"""The two-part compressed tile format.

Each window of up to 8 consecutive rows gathers its distinct columns in
ascending original order and remaps them to a contiguous compacted space.
That space is cut into 8x8 blocks; a block stores a 64-bit occupancy bitmap
(bit index = local_row * 8 + local_col, bit 0 is the least significant and
names position (0, 0)), its values packed in ascending bit order, and the 8
original column indices it covers. Col_id slots past the last distinct column
are padding: they hold original column 0 and their bitmap bits stay unset, so
they gather a valid row of B but contribute nothing.

Residual rows are stored verbatim as (row_id, col_id, value) runs with a
prefix-sum offset array.

The serialized file is a 48-byte little-endian header (magic "RSTL", u16
version, u16 window_size, u32 n_rows, u32 n_cols, u32 window_entries, u64
block_count, u64 tc_value_count, u32 residual_row_count, u64 residual_nnz)
followed by the arrays in field order, tightly packed: row_window_id u32,
row_window_offset u32, bitmaps u64, col_id u32, values f32, then residual
row_id u32, row_nnz_offset u32, col_id u32, values f32. The file size equals
the header plus storage_report's rstile_bytes, byte-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import CsrMatrix, _lock
from .partition import PartitionPlan, validate_plan, window_columns

RSTILE_MAGIC = b"RSTL"
RSTILE_VERSION = 1
_HEADER = struct.Struct("<4sHHIIIQQIQ")


class FormatError(ValueError):
    """A tile format violated one of its structural invariants."""


@dataclass(frozen=True)
class TcPart:
    row_window_id: np.ndarray      # int32, one starting row per window entry
    row_window_offset: np.ndarray  # int64 block-offset prefix sums, len entries+1
    bitmaps: np.ndarray            # uint64, one per block
    col_id: np.ndarray             # int32, 8 per block, original column indices
    values: np.ndarray             # float32, packed in bitmap order

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_window_id", _lock(np.ascontiguousarray(self.row_window_id, np.int32)))
        object.__setattr__(self, "row_window_offset", _lock(np.ascontiguousarray(self.row_window_offset, np.int64)))
        object.__setattr__(self, "bitmaps", _lock(np.ascontiguousarray(self.bitmaps, np.uint64)))
        object.__setattr__(self, "col_id", _lock(np.ascontiguousarray(self.col_id, np.int32)))
        object.__setattr__(self, "values", _lock(np.ascontiguousarray(self.values, np.float32)))

    @property
    def n_entries(self) -> int:
        return int(self.row_window_id.size)

    @property
    def n_blocks(self) -> int:
        return int(self.bitmaps.size)


@dataclass(frozen=True)
class ResidualPart:
    row_id: np.ndarray          # int32, strictly increasing
    row_nnz_offset: np.ndarray  # int64 prefix sums, len rows+1
    col_id: np.ndarray          # int32
    values: np.ndarray          # float32

    def __post_init__(self) -> None:
        object.__setattr__(self, "row_id", _lock(np.ascontiguousarray(self.row_id, np.int32)))
        object.__setattr__(self, "row_nnz_offset", _lock(np.ascontiguousarray(self.row_nnz_offset, np.int64)))
        object.__setattr__(self, "col_id", _lock(np.ascontiguousarray(self.col_id, np.int32)))
        object.__setattr__(self, "values", _lock(np.ascontiguousarray(self.values, np.float32)))

    @property
    def n_rows(self) -> int:
        return int(self.row_id.size)


@dataclass(frozen=True)
class RsTileMatrix:
    n_rows: int
    n_cols: int
    tc: TcPart
    residual: ResidualPart
    window_size: int


def popcounts(bitmaps: np.ndarray) -> np.ndarray:
    """Set-bit count of each 64-bit mask."""
    if bitmaps.size == 0:
        return np.zeros(0, dtype=np.int64)
    as_bytes = np.ascontiguousarray(bitmaps, dtype="<u8").view(np.uint8)
    return np.unpackbits(as_bytes).reshape(-1, 64).sum(axis=1).astype(np.int64)


def build_rstile(a: CsrMatrix, plan: PartitionPlan) -> RsTileMatrix:
    """Materialize the format for a matrix under a partition plan."""
    issues = validate_plan(a, plan)
    if issues:
        raise ValueError(f"plan does not match matrix: {issues[0]}")

    ent_rwid: list[int] = []
    ent_blocks: list[int] = []
    bitmap_parts: list[np.ndarray] = []
    colid_parts: list[np.ndarray] = []
    value_parts: list[np.ndarray] = []

    counts = a.row_nnz()
    for wi, (start, count) in enumerate(plan.windows):
        cols = window_columns(a, start, count)
        nblocks = -(-int(cols.size) // 8)
        lo, hi = int(a.row_ptr[start]), int(a.row_ptr[start + count])
        local_row = np.repeat(np.arange(count), counts[start:start + count])
        compact = np.searchsorted(cols, a.col_idx[lo:hi])
        blk = compact >> 3
        bit = local_row * 8 + (compact & 7)
        order = np.lexsort((bit, blk))
        blk_sorted = blk[order]
        bitmaps = np.zeros(nblocks, dtype=np.uint64)
        np.bitwise_or.at(
            bitmaps, blk_sorted, np.uint64(1) << bit[order].astype(np.uint64)
        )
        values = a.values[lo:hi][order]
        colid = np.zeros(nblocks * 8, dtype=np.int64)
        colid[:cols.size] = cols  # padding slots keep column 0, bits stay unset
        vstops = np.zeros(nblocks + 1, dtype=np.int64)
        np.cumsum(np.bincount(blk, minlength=nblocks), out=vstops[1:])

        segments = plan.split_map.get(wi, ((0, nblocks),))
        for bs, be in segments:
            ent_rwid.append(start)
            ent_blocks.append(be - bs)
            bitmap_parts.append(bitmaps[bs:be])
            colid_parts.append(colid[bs * 8:be * 8])
            value_parts.append(values[vstops[bs]:vstops[be]])

    offsets = np.zeros(len(ent_rwid) + 1, dtype=np.int64)
    np.cumsum(np.array(ent_blocks, dtype=np.int64), out=offsets[1:])
    tc = TcPart(
        np.array(ent_rwid, dtype=np.int64),
        offsets,
        np.concatenate(bitmap_parts) if bitmap_parts else np.empty(0, np.uint64),
        np.concatenate(colid_parts) if colid_parts else np.empty(0, np.int64),
        np.concatenate(value_parts) if value_parts else np.empty(0, np.float32),
    )

    res_rows = plan.residual_rows
    r_offsets = np.zeros(res_rows.size + 1, dtype=np.int64)
    if res_rows.size:
        np.cumsum(counts[res_rows], out=r_offsets[1:])
        gather = np.concatenate(
            [np.arange(a.row_ptr[r], a.row_ptr[r + 1]) for r in res_rows]
        )
        r_cols = a.col_idx[gather]
        r_vals = a.values[gather]
    else:
        r_cols = np.empty(0, np.int32)
        r_vals = np.empty(0, np.float32)
    residual = ResidualPart(res_rows, r_offsets, r_cols, r_vals)
    return RsTileMatrix(a.n_rows, a.n_cols, tc, residual, _plan_window_size(plan, a))


def _plan_window_size(plan: PartitionPlan, a: CsrMatrix) -> int:
    # only a window clamped at the matrix edge is shorter than the true size,
    # so the maximum observed count recovers it (default 8 when no windows)
    size = max((c for _, c in plan.windows), default=0)
    return size if size else 8


def validate_rstile(m: RsTileMatrix) -> list[str]:
    """Check every structural invariant; an empty list means valid."""
    issues: list[str] = []
    tc, res = m.tc, m.residual
    if not (1 <= m.window_size <= 8):
        issues.append(f"window_size {m.window_size} outside 1..8")
    if tc.row_window_offset.size != tc.n_entries + 1:
        issues.append("row_window_offset length must be entries + 1")
        return issues
    if tc.row_window_offset[0] != 0:
        issues.append("row_window_offset must start at 0")
    if np.any(np.diff(tc.row_window_offset) < 0):
        issues.append("row_window_offset not monotone")
    if tc.row_window_offset[-1] != tc.n_blocks:
        issues.append("row_window_offset end does not equal block count")
    if tc.col_id.size != tc.n_blocks * 8:
        issues.append("col_id length must be 8 per block")
    if tc.col_id.size and (int(tc.col_id.min()) < 0 or int(tc.col_id.max()) >= m.n_cols):
        issues.append("col_id entry out of range")
    if tc.n_entries:
        rw = tc.row_window_id
        if int(rw.min()) < 0 or int(rw.max()) >= m.n_rows:
            issues.append("row_window_id out of range")
        seen: set[int] = set()
        prev = -1
        for e in range(tc.n_entries):
            rid = int(rw[e])
            if rid != prev and rid in seen:
                issues.append(
                    f"entries sharing row window {rid} are not consecutive segments"
                )
                break
            seen.add(rid)
            prev = rid

    pops = popcounts(tc.bitmaps)
    cum = np.concatenate([[0], np.cumsum(pops)])
    if cum[-1] != tc.values.size:
        over = np.flatnonzero(cum[1:] > tc.values.size)
        where = int(over[0]) if over.size else tc.n_blocks - 1
        issues.append(
            f"bitmap popcount sum {int(cum[-1])} does not match value count "
            f"{tc.values.size} (first divergence at block {where})"
        )

    if tc.n_blocks and not issues:
        # bits must stay inside the rows each window actually covers
        entry_of_block = np.repeat(
            np.arange(tc.n_entries), np.diff(tc.row_window_offset)
        )
        rows_avail = np.minimum(
            m.window_size, m.n_rows - tc.row_window_id[entry_of_block]
        )
        as_bytes = np.ascontiguousarray(tc.bitmaps, dtype="<u8").view(np.uint8).reshape(-1, 8)
        occupied = as_bytes != 0
        max_row = np.where(
            occupied.any(axis=1), 7 - np.argmax(occupied[:, ::-1], axis=1), -1
        )
        bad = np.flatnonzero(max_row >= rows_avail)
        if bad.size:
            issues.append(
                f"block {int(bad[0])} has a bit beyond its window's last row"
            )

    if res.row_nnz_offset.size != res.n_rows + 1:
        issues.append("residual offset length must be rows + 1")
        return issues
    if res.row_nnz_offset[0] != 0:
        issues.append("residual offsets must start at 0")
    if np.any(np.diff(res.row_nnz_offset) < 0):
        issues.append("residual offsets not monotone")
    if res.row_nnz_offset[-1] != res.values.size or res.col_id.size != res.values.size:
        issues.append("residual offsets do not match entry count")
    if res.n_rows:
        if np.any(np.diff(res.row_id) <= 0):
            issues.append("residual row_id not strictly increasing")
        if int(res.row_id.min()) < 0 or int(res.row_id.max()) >= m.n_rows:
            issues.append("residual row_id out of range")
    if res.col_id.size and (int(res.col_id.min()) < 0 or int(res.col_id.max()) >= m.n_cols):
        issues.append("residual col_id out of range")

    if res.n_rows and tc.n_entries and not issues:
        covered = np.zeros(m.n_rows, dtype=bool)
        for e in range(tc.n_entries):
            rid = int(tc.row_window_id[e])
            covered[rid:rid + m.window_size] = True
        overlap = res.row_id[covered[res.row_id]]
        if overlap.size:
            issues.append(
                f"residual row {int(overlap[0])} lies inside a window's row range"
            )
    return issues


def decode_rstile(m: RsTileMatrix) -> CsrMatrix:
    """Reconstruct the original CSR exactly; padding contributes nothing."""
    issues = validate_rstile(m)
    if issues:
        raise FormatError(issues[0])
    tc, res = m.tc, m.residual

    if tc.n_blocks:
        entry_of_block = np.repeat(
            np.arange(tc.n_entries), np.diff(tc.row_window_offset)
        )
        rwid_of_block = tc.row_window_id[entry_of_block].astype(np.int64)
        as_bytes = np.ascontiguousarray(tc.bitmaps, dtype="<u8").view(np.uint8)
        bits = np.unpackbits(as_bytes, bitorder="little").reshape(-1, 64)
        blk, bit = np.nonzero(bits)  # row-major: ascending (block, bit), the value order
        t_rows = rwid_of_block[blk] + (bit >> 3)
        t_cols = tc.col_id[blk * 8 + (bit & 7)].astype(np.int64)
        t_vals = tc.values
    else:
        t_rows = np.empty(0, np.int64)
        t_cols = np.empty(0, np.int64)
        t_vals = np.empty(0, np.float32)

    if res.n_rows:
        r_rows = np.repeat(res.row_id.astype(np.int64), np.diff(res.row_nnz_offset))
        rows = np.concatenate([t_rows, r_rows])
        cols = np.concatenate([t_cols, res.col_id.astype(np.int64)])
        vals = np.concatenate([t_vals, res.values])
    else:
        rows, cols, vals = t_rows, t_cols, t_vals

    order = np.lexsort((cols, rows))
    row_ptr = np.zeros(m.n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m.n_rows), out=row_ptr[1:])
    try:
        return CsrMatrix(m.n_rows, m.n_cols, row_ptr, cols[order], vals[order])
    except ValueError as exc:
        raise FormatError(f"decoded arrays are not canonical: {exc}") from exc


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_rstile(path, m: RsTileMatrix) -> None:
    issues = validate_rstile(m)
    if issues:
        raise FormatError(issues[0])
    tc, res = m.tc, m.residual
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                RSTILE_MAGIC,
                RSTILE_VERSION,
                m.window_size,
                m.n_rows,
                m.n_cols,
                tc.n_entries,
                tc.n_blocks,
                tc.values.size,
                res.n_rows,
                res.values.size,
            )
        )
        for arr, dt in (
            (tc.row_window_id, "<u4"),
            (tc.row_window_offset, "<u4"),
            (tc.bitmaps, "<u8"),
            (tc.col_id, "<u4"),
            (tc.values, "<f4"),
            (res.row_id, "<u4"),
            (res.row_nnz_offset, "<u4"),
            (res.col_id, "<u4"),
            (res.values, "<f4"),
        ):
            fh.write(arr.astype(dt).tobytes())


def load_rstile(path) -> RsTileMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, wsize, n_rows, n_cols, entries, blocks, tc_nnz, r_rows, r_nnz = (
        _HEADER.unpack_from(blob)
    )
    if magic != RSTILE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != RSTILE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")

    pos = _HEADER.size
    fields = []
    for count, dt in (
        (entries, "<u4"),
        (entries + 1, "<u4"),
        (blocks, "<u8"),
        (blocks * 8, "<u4"),
        (tc_nnz, "<f4"),
        (r_rows, "<u4"),
        (r_rows + 1, "<u4"),
        (r_nnz, "<u4"),
        (r_nnz, "<f4"),
    ):
        width = int(count) * np.dtype(dt).itemsize
        if pos + width > len(blob):
            raise FormatError(f"{path}: truncated at byte {pos}")
        fields.append(np.frombuffer(blob, dtype=dt, count=int(count), offset=pos))
        pos += width
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes")

    tc = TcPart(fields[0], fields[1], fields[2], fields[3], fields[4])
    res = ResidualPart(fields[5], fields[6], fields[7], fields[8])
    m = RsTileMatrix(n_rows, n_cols, tc, res, wsize)
    issues = validate_rstile(m)
    if issues:
        raise FormatError(f"{path}: {issues[0]}")
    return m


HEADER_BYTES = _HEADER.size


# ---------------------------------------------------------------------------
# storage accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StorageReport:
    coo_bytes: int
    csr_bytes: int
    rstile_bytes: int
    tc_bytes: int
    residual_bytes: int
    bitmap_bytes: int
    colid_bytes: int
    offset_bytes: int


def storage_report(a: CsrMatrix, m: RsTileMatrix) -> StorageReport:
    """Byte counts under 32-bit indices, 32-bit values, 64-bit bitmaps."""
    entries = m.tc.n_entries
    blocks = m.tc.n_blocks
    r_rows = m.residual.n_rows
    r_nnz = int(m.residual.values.size)
    bitmap_bytes = blocks * 8
    colid_bytes = blocks * 8 * 4
    offset_bytes = (entries + 1) * 4
    tc_bytes = (
        entries * 4
        + offset_bytes
        + bitmap_bytes
        + colid_bytes
        + int(m.tc.values.size) * 4
    )
    residual_bytes = r_rows * 4 + r_nnz * 8 + (r_rows + 1) * 4
    return StorageReport(
        coo_bytes=a.nnz * 12,
        csr_bytes=a.nnz * 8 + (a.n_rows + 1) * 4,
        rstile_bytes=tc_bytes + residual_bytes,
        tc_bytes=tc_bytes,
        residual_bytes=residual_bytes,
        bitmap_bytes=bitmap_bytes,
        colid_bytes=colid_bytes,
        offset_bytes=offset_bytes,
    )
