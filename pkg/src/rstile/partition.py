"""Adaptive routing of rows into tiled windows or the scalar residual set.

A sequential scan walks the rows. Empty rows are skipped. Each nonzero head
row is tested: if it would add fewer than tau_inc distinct columns to its
window and holds at most tau_nnz nonzeros, it becomes a residual row and the
scan advances by one; otherwise a window of up to window_size rows is emitted
and the scan jumps past it. Windows whose projected block count exceeds
max_blocks_per_item are later split into block-range segments without
changing row membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import CsrMatrix


@dataclass(frozen=True)
class PartitionParams:
    window_size: int = 8
    tau_nnz: int | None = None   # None: estimated from mean row nnz
    tau_inc: int | None = None   # None: fixed default of 2
    split_factor: float = 4.0    # alternative per-row split trigger, off by default
    max_blocks_per_item: int | None = 64  # None: never split
    split_on_row_nnz: bool = False

    def __post_init__(self) -> None:
        if not (1 <= self.window_size <= 8):
            raise ValueError("window_size must lie in 1..8")
        if self.tau_nnz is not None and self.tau_nnz < 0:
            raise ValueError("tau_nnz must be non-negative")
        if self.tau_inc is not None and self.tau_inc < 0:
            raise ValueError("tau_inc must be non-negative")
        if self.split_factor <= 1.0:
            raise ValueError("split_factor must exceed 1")
        if self.max_blocks_per_item is not None and self.max_blocks_per_item < 1:
            raise ValueError("max_blocks_per_item must be at least 1")


def estimate_thresholds(n_rows: int, nnz: int) -> tuple[int, int]:
    """Default thresholds: tau_nnz = clamp(round(mean/2), 2, 6), tau_inc = 2."""
    if n_rows <= 0:
        raise ValueError("n_rows must be positive")
    tau_nnz = min(6, max(2, round(nnz / n_rows / 2)))
    return tau_nnz, 2


@dataclass(frozen=True)
class PartitionPlan:
    windows: tuple[tuple[int, int], ...]      # (start_row, row_count)
    residual_rows: np.ndarray                 # int64, ascending
    split_map: dict[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        rows = np.ascontiguousarray(self.residual_rows, dtype=np.int64)
        rows.setflags(write=False)
        object.__setattr__(self, "residual_rows", rows)

    def to_json_dict(self) -> dict:
        return {
            "windows": [
                {
                    "start": s,
                    "rows": c,
                    "segments": (
                        [list(seg) for seg in self.split_map[i]]
                        if i in self.split_map
                        else None
                    ),
                }
                for i, (s, c) in enumerate(self.windows)
            ],
            "residual": [int(r) for r in self.residual_rows],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PartitionPlan":
        windows = []
        split_map = {}
        for i, w in enumerate(doc["windows"]):
            windows.append((int(w["start"]), int(w["rows"])))
            if w.get("segments"):
                split_map[i] = tuple((int(s), int(e)) for s, e in w["segments"])
        return cls(tuple(windows), np.array(doc["residual"], dtype=np.int64), split_map)


def resolve_thresholds(a: CsrMatrix, p: PartitionParams) -> tuple[int, int]:
    if p.tau_nnz is not None and p.tau_inc is not None:
        return p.tau_nnz, p.tau_inc
    est_nnz, est_inc = estimate_thresholds(max(a.n_rows, 1), a.nnz)
    return (
        p.tau_nnz if p.tau_nnz is not None else est_nnz,
        p.tau_inc if p.tau_inc is not None else est_inc,
    )


def column_increment(a: CsrMatrix, r: int, w: int) -> int:
    """Distinct columns row r adds to the window of rows [r, r+w).

    Rows beyond the matrix edge count as empty. Equals
    |cols(r..r+w-1)| - |cols(r+1..r+w-1)|.
    """
    head = a.row_cols(r)
    if head.size == 0:
        return 0
    end = min(r + w, a.n_rows)
    if end <= r + 1:
        return int(head.size)
    tail = np.unique(a.col_idx[a.row_ptr[r + 1]:a.row_ptr[end]])
    if tail.size == 0:
        return int(head.size)
    return int(np.count_nonzero(~np.isin(head, tail)))


def partition_rows(a: CsrMatrix, p: PartitionParams = PartitionParams()) -> PartitionPlan:
    """Sequential scan assigning every nonzero row to one window or residual."""
    if a.n_rows == 0:
        return PartitionPlan((), np.empty(0, dtype=np.int64))
    tau_nnz, tau_inc = resolve_thresholds(a, p)
    counts = a.row_nnz()
    windows: list[tuple[int, int]] = []
    residual: list[int] = []
    w = p.window_size
    r = 0
    while r < a.n_rows:
        nz = int(counts[r])
        if nz == 0:
            r += 1
            continue
        delta = column_increment(a, r, w)
        if delta < tau_inc and nz <= tau_nnz:
            residual.append(r)
            r += 1
        else:
            windows.append((r, min(w, a.n_rows - r)))
            r += w
    return PartitionPlan(tuple(windows), np.array(residual, dtype=np.int64))


def window_columns(a: CsrMatrix, start: int, count: int) -> np.ndarray:
    """Sorted distinct original columns touched by rows [start, start+count)."""
    return np.unique(a.col_idx[a.row_ptr[start]:a.row_ptr[start + count]])


def split_long_work(
    a: CsrMatrix, plan: PartitionPlan, p: PartitionParams = PartitionParams()
) -> PartitionPlan:
    """Divide oversized windows into block-range segments.

    A window projecting more than max_blocks_per_item blocks (blocks of 8
    compacted columns) gets segments of at most that many blocks. With
    split_on_row_nnz set, a window whose longest row exceeds split_factor
    times the mean row length is split too, into enough segments that each
    carries at most that much of the long row. Row membership never changes.
    """
    bound = p.max_blocks_per_item
    if bound is None and not p.split_on_row_nnz:
        return replace(plan, split_map={})
    counts = a.row_nnz()
    mean = a.nnz / a.n_rows if a.n_rows else 0.0
    split_map: dict[int, tuple[tuple[int, int], ...]] = {}
    for i, (start, count) in enumerate(plan.windows):
        nblocks = -(-window_columns(a, start, count).size // 8)
        chunk = 0
        if bound is not None and nblocks > bound:
            chunk = bound
        elif p.split_on_row_nnz and nblocks > 1 and mean > 0.0:
            longest = int(counts[start:start + count].max())
            cap = p.split_factor * mean
            if longest > cap:
                chunk = max(1, -(-nblocks // math.ceil(longest / cap)))
        if chunk and chunk < nblocks:
            split_map[i] = tuple(
                (b, min(b + chunk, nblocks)) for b in range(0, nblocks, chunk)
            )
    return replace(plan, split_map=split_map)


def validate_plan(a: CsrMatrix, plan: PartitionPlan) -> list[str]:
    """Structural checks; an empty list means the plan fits the matrix."""
    issues: list[str] = []
    counts = a.row_nnz()
    covered = np.zeros(a.n_rows, dtype=bool)
    prev_end = -1
    for i, (start, count) in enumerate(plan.windows):
        if count < 1 or start < 0 or start + count > a.n_rows:
            issues.append(f"window {i} range [{start}, {start + count}) out of bounds")
            continue
        if start <= prev_end:
            issues.append(f"window {i} overlaps or is out of order")
        prev_end = start + count - 1
        if counts[start] == 0:
            issues.append(f"window {i} starts at empty row {start}")
        covered[start:start + count] = True
    res = plan.residual_rows
    if res.size:
        if np.any(np.diff(res) <= 0):
            issues.append("residual rows not strictly increasing")
        if int(res.min()) < 0 or int(res.max()) >= a.n_rows:
            issues.append("residual row index out of range")
        else:
            if np.any(counts[res] == 0):
                issues.append("residual set contains an empty row")
            both = res[covered[res]]
            if both.size:
                issues.append(f"row {int(both[0])} is in both a window and residual")
    if a.n_rows:
        in_res = np.zeros(a.n_rows, dtype=bool)
        if res.size and issues == []:
            in_res[res] = True
        elif res.size:
            valid = res[(res >= 0) & (res < a.n_rows)]
            in_res[valid] = True
        missing = np.flatnonzero((counts > 0) & ~covered & ~in_res)
        if missing.size:
            issues.append(f"nonzero row {int(missing[0])} assigned nowhere")
    for i, segments in plan.split_map.items():
        if i < 0 or i >= len(plan.windows):
            issues.append(f"split_map references missing window {i}")
            continue
        start, count = plan.windows[i]
        nblocks = -(-window_columns(a, start, count).size // 8)
        pos = 0
        for s, e in segments:
            if s != pos or e <= s:
                issues.append(f"window {i} segments do not tile its block range")
                break
            pos = e
        else:
            if pos != nblocks:
                issues.append(f"window {i} segments do not cover {nblocks} blocks")
    return issues
