"""Structural quality metrics: tile density, threshold sweeps, ordering gains."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import CsrMatrix
from .partition import PartitionParams, partition_rows, split_long_work
from .reorder import Permutation, column_weights, permutation_objective, permute_rows
from .tile import RsTileMatrix, build_rstile

SWEEP_CSV_HEADER = "tau,mean_nnz_per_block,mean_nnz_per_window,residual_nnz_fraction"


@dataclass(frozen=True)
class TileDensityReport:
    mean_nnz_per_block: float
    mean_nnz_per_window: float
    block_count: int
    window_count: int
    residual_nnz_fraction: float
    residual_row_fraction: float


def tile_density(m: RsTileMatrix) -> TileDensityReport:
    """Count real nonzeros only; padding slots never contribute.

    A window split into segments still counts as one window. Row fractions
    are relative to rows that hold at least one nonzero.
    """
    tc = m.tc
    tc_nnz = int(tc.values.size)
    res_nnz = int(m.residual.values.size)
    total = tc_nnz + res_nnz

    rwid = tc.row_window_id
    if rwid.size:
        heads = np.concatenate([[True], rwid[1:] != rwid[:-1]])
        window_count = int(np.count_nonzero(heads))
        head_idx = np.flatnonzero(heads)
        bounds = np.concatenate([head_idx, [rwid.size]])
        row_bytes = np.ascontiguousarray(tc.bitmaps, dtype="<u8").view(np.uint8).reshape(-1, 8)
        occupied_rows = 0
        off = tc.row_window_offset
        for i in range(window_count):
            bs, be = int(off[bounds[i]]), int(off[bounds[i + 1]])
            occupied_rows += int((row_bytes[bs:be] != 0).any(axis=0).sum())
    else:
        window_count = 0
        occupied_rows = 0

    nonzero_rows = occupied_rows + m.residual.n_rows
    return TileDensityReport(
        mean_nnz_per_block=tc_nnz / tc.n_blocks if tc.n_blocks else 0.0,
        mean_nnz_per_window=tc_nnz / window_count if window_count else 0.0,
        block_count=tc.n_blocks,
        window_count=window_count,
        residual_nnz_fraction=res_nnz / total if total else 0.0,
        residual_row_fraction=m.residual.n_rows / nonzero_rows if nonzero_rows else 0.0,
    )


def threshold_sweep(
    a: CsrMatrix, tau_values: list[int], p: PartitionParams | None = None
) -> list[tuple[int, TileDensityReport]]:
    """Rebuild the format once per row-nnz threshold and report density."""
    if not tau_values:
        raise ValueError("tau_values must be non-empty")
    p = p or PartitionParams()
    out = []
    for tau in tau_values:
        params = replace(p, tau_nnz=int(tau))
        plan = split_long_work(a, partition_rows(a, params), params)
        out.append((int(tau), tile_density(build_rstile(a, plan))))
    return out


def sweep_csv(rows: list[tuple[int, TileDensityReport]]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for tau, rep in rows:
        lines.append(
            f"{tau},{rep.mean_nnz_per_block!r},{rep.mean_nnz_per_window!r},"
            f"{rep.residual_nnz_fraction!r}"
        )
    return "\n".join(lines) + "\n"


def report_json(report) -> str:
    """Deterministic JSON rendering of any report dataclass."""
    return json.dumps(asdict(report), sort_keys=True, indent=2)


@dataclass(frozen=True)
class ReorderGain:
    objective_before: float
    objective_after: float
    block_count_before: int
    block_count_after: int


def reorder_gain(
    a: CsrMatrix,
    p_before: Permutation,
    p_after: Permutation,
    alpha: float = 0.5,
    partition: PartitionParams | None = None,
) -> ReorderGain:
    """Compare adjacency objective and block count under two orderings."""
    w = column_weights(a, alpha)
    partition = partition or PartitionParams()

    def blocks(perm: Permutation) -> int:
        b = permute_rows(a, perm.order)
        plan = split_long_work(b, partition_rows(b, partition), partition)
        return build_rstile(b, plan).tc.n_blocks

    return ReorderGain(
        objective_before=permutation_objective(a, w, p_before.order),
        objective_after=permutation_objective(a, w, p_after.order),
        block_count_before=blocks(p_before),
        block_count_after=blocks(p_after),
    )
