"""Density reporting, threshold sweeps, and ordering-gain measurement."""

import json

import numpy as np
import pytest

from rstile.core import CsrMatrix, generate_power_law
from rstile.metrics import (
    SWEEP_CSV_HEADER,
    ReorderGain,
    TileDensityReport,
    reorder_gain,
    report_json,
    sweep_csv,
    threshold_sweep,
    tile_density,
)
from rstile.partition import PartitionParams, partition_rows, split_long_work
from rstile.reorder import Permutation
from rstile.tile import build_rstile

FORCE_TC = PartitionParams(tau_nnz=0)


def build(a, p=None):
    p = p or PartitionParams()
    return build_rstile(a, split_long_work(a, partition_rows(a, p), p))


# ---------------------------------------------------------------------------
# tile density
# ---------------------------------------------------------------------------

def test_density_full_single_block():
    rep = tile_density(build(CsrMatrix.from_dense(np.ones((8, 8), dtype=np.float32)), FORCE_TC))
    assert rep.block_count == 1
    assert rep.window_count == 1
    assert rep.mean_nnz_per_block == 64.0
    assert rep.mean_nnz_per_window == 64.0
    assert rep.residual_nnz_fraction == 0.0


def test_density_residual_only_matrix():
    rep = tile_density(build(CsrMatrix.from_dense(np.eye(16, dtype=np.float32))))
    assert rep.block_count == 0
    assert rep.window_count == 0
    assert rep.mean_nnz_per_block == 0.0
    assert rep.mean_nnz_per_window == 0.0
    assert rep.residual_nnz_fraction == 1.0
    assert rep.residual_row_fraction == 1.0


def test_density_planted_two_block_window():
    # 2 rows, 20 nonzeros over 16 distinct columns: one window, two blocks
    dense = np.zeros((2, 16), dtype=np.float32)
    dense[0, :10] = 1.0
    dense[1, 6:16] = 1.0
    rep = tile_density(build(CsrMatrix.from_dense(dense), FORCE_TC))
    assert rep.window_count == 1
    assert rep.block_count == 2
    assert rep.mean_nnz_per_window == 20.0
    assert rep.mean_nnz_per_block == 10.0


def test_density_counts_reconcile(small_corpus):
    for a in small_corpus:
        m = build(a)
        rep = tile_density(m)
        assert rep.block_count == m.tc.n_blocks
        tc_nnz = m.tc.values.size
        res_nnz = m.residual.values.size
        if tc_nnz + res_nnz:
            assert rep.residual_nnz_fraction == res_nnz / (tc_nnz + res_nnz)
        if rep.block_count:
            assert rep.mean_nnz_per_block == tc_nnz / rep.block_count


def test_density_ignores_split_granularity():
    a = generate_power_law(64, 256, 2000, 2.0, seed=13)
    plain = tile_density(build(a, PartitionParams(max_blocks_per_item=None)))
    split = tile_density(build(a, PartitionParams(max_blocks_per_item=2)))
    assert plain == split


def test_empty_matrix_density_all_zero():
    rep = tile_density(build(CsrMatrix.from_dense(np.zeros((4, 4), dtype=np.float32))))
    assert rep == TileDensityReport(0.0, 0.0, 0, 0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# threshold sweep
# ---------------------------------------------------------------------------

def test_sweep_zero_threshold_keeps_everything_tiled():
    a = generate_power_law(64, 48, 400, 1.5, seed=14)
    [(tau, rep)] = threshold_sweep(a, [0])
    assert tau == 0
    assert rep.residual_nnz_fraction == 0.0


def test_sweep_block_density_rises_with_threshold():
    a = generate_power_law(96, 64, 269, 2.0, seed=42)
    rows = threshold_sweep(a, [0, 1, 2, 3, 4])
    ds = [rep.mean_nnz_per_block for _, rep in rows]
    assert all(b >= a_ for a_, b in zip(ds, ds[1:]))
    assert ds[4] > ds[0]
    assert rows[4][1].residual_nnz_fraction <= 0.15


def test_sweep_saturating_threshold_drains_low_increment_rows():
    # identical supports: each head row adds nothing to its lookahead, so all
    # but the final row (whose lookahead is empty) drain to the residual set
    dense = np.zeros((10, 8), dtype=np.float32)
    dense[:, :3] = 1.0
    a = CsrMatrix.from_dense(dense)
    [(_, rep)] = threshold_sweep(a, [a.n_cols])
    assert rep.window_count == 1
    assert rep.residual_row_fraction == 0.9


def test_sweep_rejects_empty_tau_list():
    a = generate_power_law(16, 16, 64, 1.5, seed=15)
    with pytest.raises(ValueError):
        threshold_sweep(a, [])


def test_sweep_csv_layout():
    a = CsrMatrix.from_dense(np.eye(16, dtype=np.float32))
    text = sweep_csv(threshold_sweep(a, [0]))
    lines = text.splitlines()
    assert lines[0] == SWEEP_CSV_HEADER
    assert lines[1] == "0,8.0,8.0,0.0"
    assert text.endswith("\n")


def test_sweep_csv_floats_round_trip_exactly():
    a = generate_power_law(96, 64, 269, 2.0, seed=42)
    rows = threshold_sweep(a, [0, 4])
    lines = sweep_csv(rows).splitlines()[1:]
    for (tau, rep), line in zip(rows, lines):
        cells = line.split(",")
        assert int(cells[0]) == tau
        assert float(cells[1]) == rep.mean_nnz_per_block
        assert float(cells[3]) == rep.residual_nnz_fraction


def test_report_json_is_deterministic_and_parseable():
    a = generate_power_law(64, 48, 400, 1.5, seed=16)
    rep = tile_density(build(a))
    text = report_json(rep)
    assert text == report_json(rep)
    doc = json.loads(text)
    assert doc["block_count"] == rep.block_count
    assert list(doc) == sorted(doc)


# ---------------------------------------------------------------------------
# reorder gain
# ---------------------------------------------------------------------------

def test_gain_equal_permutations_report_no_change():
    a = generate_power_law(32, 32, 160, 1.5, seed=17)
    p = Permutation(np.arange(32), 0.0)
    g = reorder_gain(a, p, p)
    assert g.objective_before == g.objective_after
    assert g.block_count_before == g.block_count_after


def test_gain_identity_matrix_block_floor():
    n = 32
    a = CsrMatrix.from_dense(np.eye(n, dtype=np.float32))
    shuffled = Permutation(np.random.default_rng(18).permutation(n), 0.0)
    g = reorder_gain(a, shuffled, Permutation(np.arange(n), 0.0), partition=FORCE_TC)
    assert g.block_count_before == n // 8
    assert g.block_count_after == n // 8


def planted_community_matrix(seed, blocks=6, rows_per_block=8):
    rng = np.random.default_rng(seed)
    n = blocks * rows_per_block
    dense = np.zeros((n, n), dtype=np.float32)
    for b in range(blocks):
        lo = b * rows_per_block
        mask = rng.random((rows_per_block, rows_per_block)) < 0.6
        mask[np.arange(rows_per_block), np.arange(rows_per_block)] = True
        dense[lo:lo + rows_per_block, lo:lo + rows_per_block] = mask
    sigma = rng.permutation(n)
    return CsrMatrix.from_dense(dense[sigma]), sigma


def test_gain_recovering_planted_order_reduces_blocks():
    a, sigma = planted_community_matrix(seed=19)
    recover = Permutation(np.argsort(sigma), 0.0)
    before = Permutation(np.arange(a.n_rows), 0.0)
    g = reorder_gain(a, before, recover)
    assert g.block_count_after <= g.block_count_before
    assert g.objective_after <= g.objective_before


def test_gain_dataclass_shape():
    g = ReorderGain(1.0, 0.5, 10, 6)
    assert g.objective_before == 1.0
    assert g.block_count_after == 6
