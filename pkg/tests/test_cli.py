"""Command-line surface: payloads, files, determinism, exit codes."""

import json

import numpy as np
import pytest

from rstile.cli import main
from rstile.core import CsrMatrix, CooMatrix, csr_equal, generate_power_law
from rstile.mmio import read_dense, read_matrix_market, write_matrix_market
from rstile.reorder import load_permutation
from rstile.tile import HEADER_BYTES, decode_rstile, load_rstile, save_rstile
from rstile.partition import PartitionParams, partition_rows, split_long_work
from rstile.tile import build_rstile


def write_mtx(path, a):
    write_matrix_market(path, a)
    return str(path)


def identity_mtx(path, n):
    return write_mtx(path, CsrMatrix.from_dense(np.eye(n, dtype=np.float32)))


def run(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def run_json(capsys, *argv):
    rc, out, err = run(capsys, *argv)
    return rc, json.loads(out), err


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def test_stats_identity_matrix(tmp_path, capsys):
    path = identity_mtx(tmp_path / "i.mtx", 100)
    rc, doc, _ = run_json(capsys, "stats", path)
    assert rc == 0
    assert doc["n_rows"] == 100
    assert doc["nnz"] == 100
    assert doc["nnz_mean"] == 1.0
    assert doc["long_row_ratio_2x"] == 0.0
    assert doc["long_row_ratio_4x"] == 0.0


def test_stats_long_row_ratios(tmp_path, capsys):
    triples = [(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]
    triples += [(3, c, 1.0) for c in range(9)]
    a = CooMatrix.from_triples(4, 9, triples).to_csr()
    path = write_mtx(tmp_path / "r.mtx", a)
    rc, doc, _ = run_json(capsys, "stats", path)
    assert rc == 0
    assert doc["nnz_mean"] == 3.0
    assert doc["long_row_ratio_2x"] == 0.25
    assert doc["long_row_ratio_4x"] == 0.0


def test_stats_missing_file_exits_two(tmp_path, capsys):
    rc, out, err = run(capsys, "stats", str(tmp_path / "absent.mtx"))
    assert rc == 2
    assert out == ""
    assert "rstile:" in err


# ---------------------------------------------------------------------------
# reorder
# ---------------------------------------------------------------------------

def test_reorder_single_row_is_identity(tmp_path, capsys):
    dense = np.zeros((1, 4), dtype=np.float32)
    dense[0, [0, 2]] = 1.0
    path = write_mtx(tmp_path / "one.mtx", CsrMatrix.from_dense(dense))
    out_path = tmp_path / "one.reordered.mtx"
    rc, doc, _ = run_json(capsys, "reorder", path, "--output", str(out_path))
    assert rc == 0
    assert doc["n_rows"] == 1
    perm = load_permutation(doc["permutation"])
    assert perm.order.tolist() == [0]
    assert csr_equal(read_matrix_market(out_path), read_matrix_market(path))


def shuffled_planted(tmp_path, seed=23):
    rng = np.random.default_rng(seed)
    blocks, rpb = 6, 8
    n = blocks * rpb
    dense = np.zeros((n, n), dtype=np.float32)
    for b in range(blocks):
        lo = b * rpb
        mask = rng.random((rpb, rpb)) < 0.6
        mask[np.arange(rpb), np.arange(rpb)] = True
        dense[lo:lo + rpb, lo:lo + rpb] = mask
    a = CsrMatrix.from_dense(dense[rng.permutation(n)])
    return write_mtx(tmp_path / "planted.mtx", a)


def test_reorder_improves_planted_structure(tmp_path, capsys):
    path = shuffled_planted(tmp_path)
    out_path = tmp_path / "out.mtx"
    rc, doc, _ = run_json(capsys, "reorder", path, "--output", str(out_path))
    assert rc == 0
    assert doc["objective_after"] <= doc["objective_before"]
    reordered = read_matrix_market(out_path)
    original = read_matrix_market(path)
    assert reordered.nnz == original.nnz


def test_reorder_rerun_is_byte_identical(tmp_path, capsys):
    path = shuffled_planted(tmp_path)
    outs = []
    for tag in ("a", "b"):
        out_path = tmp_path / f"{tag}.mtx"
        rc, _, _ = run(capsys, "reorder", path, "--output", str(out_path))
        assert rc == 0
        outs.append(out_path.read_bytes() + (tmp_path / f"{tag}.mtx.perm").read_bytes())
    assert outs[0] == outs[1]


# ---------------------------------------------------------------------------
# convert
# ---------------------------------------------------------------------------

def test_convert_writes_loadable_file(tmp_path, capsys):
    path = identity_mtx(tmp_path / "i.mtx", 16)
    out_path = tmp_path / "i.rst"
    rc, doc, _ = run_json(capsys, "convert", path, "--output", str(out_path))
    assert rc == 0
    m = load_rstile(out_path)
    assert csr_equal(decode_rstile(m), read_matrix_market(path))
    assert out_path.stat().st_size == HEADER_BYTES + doc["storage"]["rstile_bytes"]


def test_convert_dense_reports_full_block(tmp_path, capsys):
    path = write_mtx(
        tmp_path / "d.mtx", CsrMatrix.from_dense(np.ones((8, 8), dtype=np.float32))
    )
    rc, doc, _ = run_json(
        capsys, "convert", path, "--tau-nnz", "0", "--output", str(tmp_path / "d.rst")
    )
    assert rc == 0
    assert doc["density"]["block_count"] == 1
    assert doc["density"]["window_count"] == 1
    assert doc["density"]["mean_nnz_per_block"] == 64.0


# ---------------------------------------------------------------------------
# spmm
# ---------------------------------------------------------------------------

def test_spmm_identity_check_reports_zero_error(tmp_path, capsys):
    path = identity_mtx(tmp_path / "i.mtx", 32)
    out_path = tmp_path / "c.dmat"
    rc, doc, _ = run_json(
        capsys, "spmm", path, "--check", "--d", "8", "--output", str(out_path)
    )
    assert rc == 0
    assert doc["max_relative_error"] == 0.0
    c = read_dense(out_path)
    rng = np.random.default_rng(0)
    expected = rng.uniform(-1.0, 1.0, (32, 8)).astype(np.float32)
    assert np.array_equal(c.data, expected)


def test_spmm_random_matrix_check_passes(tmp_path, capsys):
    a = generate_power_law(128, 96, 800, 1.5, seed=24)
    path = write_mtx(tmp_path / "a.mtx", a)
    rc, doc, _ = run_json(capsys, "spmm", path, "--check", "--d", "16")
    assert rc == 0
    assert doc["max_relative_error"] <= 1e-5


def test_spmm_same_seed_runs_are_byte_identical(tmp_path, capsys):
    a = generate_power_law(96, 80, 600, 1.5, seed=25)
    path = write_mtx(tmp_path / "a.mtx", a)
    blobs = []
    for tag in ("x", "y"):
        out_path = tmp_path / f"{tag}.dmat"
        rc, _, _ = run(
            capsys, "spmm", path, "--accum", "f64", "--seed", "7",
            "--output", str(out_path),
        )
        assert rc == 0
        blobs.append(out_path.read_bytes())
    assert blobs[0] == blobs[1]


def test_spmm_worker_count_does_not_change_output(tmp_path, capsys):
    a = generate_power_law(96, 80, 600, 1.5, seed=26)
    path = write_mtx(tmp_path / "a.mtx", a)
    blobs = {}
    docs = {}
    for workers in ("1", "8"):
        out_path = tmp_path / f"w{workers}.dmat"
        rc, doc, _ = run_json(
            capsys, "spmm", path, "--accum", "f64", "--workers", workers,
            "--check", "--output", str(out_path),
        )
        assert rc == 0
        blobs[workers] = out_path.read_bytes()
        docs[workers] = doc
    assert blobs["1"] == blobs["8"]
    for doc in docs.values():
        doc.pop("workers")
        doc.pop("output")
    assert docs["1"] == docs["8"]


def test_spmm_reads_b_from_file(tmp_path, capsys):
    from rstile.core import DenseMatrix
    from rstile.mmio import write_dense

    path = identity_mtx(tmp_path / "i.mtx", 8)
    b = DenseMatrix.from_array(np.arange(16, dtype=np.float32).reshape(8, 2))
    b_path = tmp_path / "b.dmat"
    write_dense(b_path, b)
    out_path = tmp_path / "c.dmat"
    rc, doc, _ = run_json(
        capsys, "spmm", path, "--b", str(b_path), "--output", str(out_path)
    )
    assert rc == 0
    assert doc["d"] == 2
    assert np.array_equal(read_dense(out_path).data, b.data)


def test_spmm_b_dimension_mismatch_exits_two(tmp_path, capsys):
    from rstile.core import DenseMatrix
    from rstile.mmio import write_dense

    path = identity_mtx(tmp_path / "i.mtx", 8)
    b_path = tmp_path / "b.dmat"
    write_dense(b_path, DenseMatrix.from_array(np.ones((9, 2), dtype=np.float32)))
    rc, _, err = run(capsys, "spmm", path, "--b", str(b_path))
    assert rc == 2
    assert "rstile:" in err


def test_spmm_accepts_tile_file_input(tmp_path, capsys):
    a = generate_power_law(64, 48, 400, 1.5, seed=27)
    p = PartitionParams()
    m = build_rstile(a, split_long_work(a, partition_rows(a, p), p))
    rst = tmp_path / "a.rst"
    save_rstile(rst, m)
    rc, doc, _ = run_json(capsys, "spmm", str(rst), "--check", "--d", "8")
    assert rc == 0
    assert doc["nnz"] == a.nnz


def test_spmm_truncated_tile_file_exits_one(tmp_path, capsys):
    a = generate_power_law(64, 48, 400, 1.5, seed=28)
    p = PartitionParams()
    m = build_rstile(a, split_long_work(a, partition_rows(a, p), p))
    rst = tmp_path / "a.rst"
    save_rstile(rst, m)
    blob = rst.read_bytes()
    rst.write_bytes(blob[: len(blob) - 16])
    rc, _, err = run(capsys, "spmm", str(rst))
    assert rc == 1
    assert "rstile:" in err


def test_workers_env_default(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RSTILE_WORKERS", "3")
    path = identity_mtx(tmp_path / "i.mtx", 8)
    rc, doc, _ = run_json(capsys, "spmm", path, "--d", "4")
    assert rc == 0
    assert doc["workers"] == 3


# ---------------------------------------------------------------------------
# partition-sweep
# ---------------------------------------------------------------------------

def test_sweep_single_point_csv(tmp_path, capsys):
    path = identity_mtx(tmp_path / "i.mtx", 16)
    rc, out, _ = run(capsys, "partition-sweep", path, "--tau-range", "0:0")
    assert rc == 0
    lines = out.splitlines()
    assert lines[0] == "tau,mean_nnz_per_block,mean_nnz_per_window,residual_nnz_fraction"
    assert lines[1] == "0,8.0,8.0,0.0"
    assert len(lines) == 2


def test_sweep_density_trend_on_skewed_matrix(tmp_path, capsys):
    a = generate_power_law(96, 64, 269, 2.0, seed=42)
    path = write_mtx(tmp_path / "a.mtx", a)
    rc, out, _ = run(capsys, "partition-sweep", path, "--tau-range", "0:4")
    assert rc == 0
    ds = [float(line.split(",")[1]) for line in out.splitlines()[1:]]
    assert len(ds) == 5
    assert all(b >= a_ for a_, b in zip(ds, ds[1:]))
    assert ds[4] > ds[0]


def test_sweep_json_format(tmp_path, capsys):
    path = identity_mtx(tmp_path / "i.mtx", 16)
    rc, doc, _ = run_json(capsys, "partition-sweep", path, "--tau-range", "0:2",
                          "--format", "json")
    assert rc == 0
    assert [row["tau"] for row in doc] == [0, 1, 2]
    assert all("mean_nnz_per_block" in row for row in doc)


def test_sweep_output_file(tmp_path, capsys):
    path = identity_mtx(tmp_path / "i.mtx", 16)
    report = tmp_path / "sweep.csv"
    rc, out, _ = run(capsys, "partition-sweep", path, "--tau-range", "0:1",
                     "--output", str(report))
    assert rc == 0
    assert out == ""
    assert report.read_text().splitlines()[1] == "0,8.0,8.0,0.0"


@pytest.mark.parametrize("bad", ["5", "4:2", "a:b"])
def test_sweep_bad_range_exits_two(tmp_path, capsys, bad):
    path = identity_mtx(tmp_path / "i.mtx", 8)
    rc, _, err = run(capsys, "partition-sweep", path, "--tau-range", bad)
    assert rc == 2
    assert "rstile:" in err


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def test_bench_single_identity(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    identity_mtx(corpus / "i.mtx", 16)
    rc, doc, err = run_json(capsys, "bench", str(corpus), "--check", "--d", "4")
    assert rc == 0
    assert len(doc["matrices"]) == 1
    entry = doc["matrices"][0]
    assert entry["name"] == "i.mtx"
    assert entry["max_relative_error"] == 0.0
    assert "bench:" in err


def test_bench_rerun_is_identical(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(3):
        write_mtx(corpus / f"m{i}.mtx", generate_power_law(32, 24, 150, 1.5, seed=i))
    outs = []
    for _ in range(2):
        rc, out, _ = run(capsys, "bench", str(corpus), "--check", "--d", "4")
        assert rc == 0
        outs.append(out)
    assert outs[0] == outs[1]


def test_bench_empty_directory_warns(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    rc, doc, err = run_json(capsys, "bench", str(corpus))
    assert rc == 0
    assert doc == {"matrices": []}
    assert "no .mtx files" in err


def test_bench_skips_unreadable_entries(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    identity_mtx(corpus / "good.mtx", 8)
    (corpus / "bad.mtx").write_text("%%MatrixMarket matrix array real general\n")
    rc, doc, err = run_json(capsys, "bench", str(corpus), "--d", "4")
    assert rc == 0
    assert [e["name"] for e in doc["matrices"]] == ["good.mtx"]
    assert "skipping" in err


def test_bench_large_corpus_one_entry_per_file(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    a = CsrMatrix.from_dense(np.eye(8, dtype=np.float32))
    for i in range(512):
        write_mtx(corpus / f"m{i:03d}.mtx", a)
    rc, doc, _ = run_json(capsys, "bench", str(corpus), "--d", "2")
    assert rc == 0
    assert len(doc["matrices"]) == 512
