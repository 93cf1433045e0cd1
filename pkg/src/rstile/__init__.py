"""Row-windowed bitmap tiles and hybrid sparse-dense multiplication."""

from .core import (
    CooMatrix,
    CsrMatrix,
    DenseMatrix,
    RowStats,
    csr_equal,
    generate_power_law,
    max_relative_error,
    oracle_spmm,
    row_stats,
)
from .execute import (
    ExecConfig,
    Fragment8x8,
    VerificationError,
    decode_tile,
    exec_residual,
    exec_tc_window,
    hybrid_spmm,
)
from .metrics import (
    ReorderGain,
    TileDensityReport,
    reorder_gain,
    sweep_csv,
    threshold_sweep,
    tile_density,
)
from .mmio import (
    MatrixMarketError,
    read_dense,
    read_matrix_market,
    write_dense,
    write_matrix_market,
)
from .partition import (
    PartitionParams,
    PartitionPlan,
    estimate_thresholds,
    partition_rows,
    split_long_work,
    validate_plan,
)
from .reorder import (
    KnnGraph,
    Permutation,
    ReorderParams,
    build_candidates,
    build_knn,
    column_weights,
    isolation_adjust,
    load_permutation,
    mst_order,
    permutation_objective,
    permute_rows,
    refine_2opt,
    reorder_pipeline,
    save_permutation,
    w_jaccard,
)
from .tile import (
    FormatError,
    ResidualPart,
    RsTileMatrix,
    StorageReport,
    TcPart,
    build_rstile,
    decode_rstile,
    load_rstile,
    save_rstile,
    storage_report,
    validate_rstile,
)

__version__ = "0.1.0"

__all__ = [
    "CooMatrix",
    "CsrMatrix",
    "DenseMatrix",
    "ExecConfig",
    "FormatError",
    "Fragment8x8",
    "KnnGraph",
    "MatrixMarketError",
    "PartitionParams",
    "PartitionPlan",
    "Permutation",
    "ReorderGain",
    "ReorderParams",
    "ResidualPart",
    "RowStats",
    "RsTileMatrix",
    "StorageReport",
    "TcPart",
    "TileDensityReport",
    "VerificationError",
    "build_candidates",
    "build_knn",
    "build_rstile",
    "column_weights",
    "csr_equal",
    "decode_rstile",
    "decode_tile",
    "estimate_thresholds",
    "exec_residual",
    "exec_tc_window",
    "generate_power_law",
    "hybrid_spmm",
    "isolation_adjust",
    "load_permutation",
    "load_rstile",
    "max_relative_error",
    "mst_order",
    "oracle_spmm",
    "partition_rows",
    "permutation_objective",
    "permute_rows",
    "read_dense",
    "read_matrix_market",
    "refine_2opt",
    "reorder_gain",
    "reorder_pipeline",
    "row_stats",
    "save_permutation",
    "save_rstile",
    "split_long_work",
    "storage_report",
    "sweep_csv",
    "threshold_sweep",
    "tile_density",
    "validate_plan",
    "validate_rstile",
    "w_jaccard",
    "write_dense",
    "write_matrix_market",
]
