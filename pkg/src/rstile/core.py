"""Core matrix types, synthetic generators, and the reference SpMM.

All matrix values are 32-bit floats. Dimensions and nonzero counts must stay
below 2**31 so that every index fits an unsigned 32-bit slot in the on-disk
formats; constructors reject anything larger.

The reference product ``oracle_spmm`` accumulates in 64-bit floats and rounds
to 32-bit on store. It is deliberately naive (a row-at-a-time dot product) so
it stays independent of the tiled executor it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INDEX_LIMIT = 2**31


def _lock(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CsrMatrix:
    """Canonical compressed-sparse-row matrix.

    ``row_ptr`` has length ``n_rows + 1`` with ``row_ptr[0] == 0`` and
    ``row_ptr[-1] == nnz``; column indices increase strictly within each row.
    Arrays are coerced to fixed dtypes and made read-only, so instances are
    safe to share across threads.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray  # int64, len n_rows+1
    col_idx: np.ndarray  # int32, len nnz
    values: np.ndarray   # float32, len nnz

    def __post_init__(self) -> None:
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int32)
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if max(self.n_rows, self.n_cols, values.size) >= INDEX_LIMIT:
            raise ValueError("dimensions or nnz exceed the 32-bit index limit")
        if row_ptr.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr must have length n_rows + 1")
        if col_idx.shape != values.shape:
            raise ValueError("col_idx and values must have equal length")
        if row_ptr[0] != 0 or row_ptr[-1] != values.size:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if values.size and np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be monotone")
        if values.size:
            if int(col_idx.min()) < 0 or int(col_idx.max()) >= self.n_cols:
                raise ValueError("column index out of range")
            diffs = np.diff(col_idx)
            if diffs.size:
                crossing = np.zeros(diffs.size, dtype=bool)
                marks = row_ptr[1:-1] - 1  # diff positions that span a row boundary
                marks = marks[(marks >= 0) & (marks < diffs.size)]
                crossing[marks] = True
                if np.any(diffs[~crossing] <= 0):
                    raise ValueError("column indices must increase strictly within a row")
        object.__setattr__(self, "row_ptr", _lock(row_ptr))
        object.__setattr__(self, "col_idx", _lock(col_idx))
        object.__setattr__(self, "values", _lock(values))

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row_cols(self, r: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[r]:self.row_ptr[r + 1]]

    def row_values(self, r: int) -> np.ndarray:
        return self.values[self.row_ptr[r]:self.row_ptr[r + 1]]

    @classmethod
    def from_dense(cls, dense) -> "CsrMatrix":
        arr = np.asarray(dense, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError("expected a 2-d array")
        rows, cols = np.nonzero(arr)
        row_ptr = np.zeros(arr.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=arr.shape[0]), out=row_ptr[1:])
        return cls(arr.shape[0], arr.shape[1], row_ptr, cols, arr[rows, cols])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=np.float32)
        for r in range(self.n_rows):
            out[r, self.row_cols(r)] = self.row_values(r)
        return out


def csr_equal(a: CsrMatrix, b: CsrMatrix) -> bool:
    """Exact structural and value equality of two canonical CSR matrices."""
    return (
        a.n_rows == b.n_rows
        and a.n_cols == b.n_cols
        and np.array_equal(a.row_ptr, b.row_ptr)
        and np.array_equal(a.col_idx, b.col_idx)
        and np.array_equal(a.values, b.values)
    )


@dataclass(frozen=True)
class CooMatrix:
    """Coordinate-format matrix held as parallel (row, col, value) arrays.

    Duplicates are permitted until ``canonicalize`` sums them; ``to_csr``
    always canonicalizes first.
    """

    n_rows: int
    n_cols: int
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray

    def __post_init__(self) -> None:
        row = np.ascontiguousarray(self.row, dtype=np.int64)
        col = np.ascontiguousarray(self.col, dtype=np.int64)
        val = np.ascontiguousarray(self.val, dtype=np.float32)
        if not (row.shape == col.shape == val.shape):
            raise ValueError("row, col, val must have equal length")
        if max(self.n_rows, self.n_cols, val.size) >= INDEX_LIMIT:
            raise ValueError("dimensions or nnz exceed the 32-bit index limit")
        if val.size:
            if int(row.min()) < 0 or int(row.max()) >= self.n_rows:
                raise ValueError("row index out of range")
            if int(col.min()) < 0 or int(col.max()) >= self.n_cols:
                raise ValueError("column index out of range")
        object.__setattr__(self, "row", _lock(row))
        object.__setattr__(self, "col", _lock(col))
        object.__setattr__(self, "val", _lock(val))

    @property
    def nnz(self) -> int:
        return int(self.val.size)

    @classmethod
    def from_triples(cls, n_rows: int, n_cols: int, triples) -> "CooMatrix":
        if triples:
            row, col, val = (np.array(x) for x in zip(*triples))
        else:
            row = col = val = np.empty(0)
        return cls(n_rows, n_cols, row, col, val)

    def entries(self) -> list[tuple[int, int, float]]:
        return [
            (int(r), int(c), float(v))
            for r, c, v in zip(self.row, self.col, self.val)
        ]

    def canonicalize(self) -> "CooMatrix":
        """Sort by (row, col) and sum duplicate coordinates."""
        if self.val.size == 0:
            return self
        key = self.row * max(self.n_cols, 1) + self.col
        order = np.argsort(key, kind="stable")
        k = key[order]
        head = np.ones(k.size, dtype=bool)
        head[1:] = k[1:] != k[:-1]
        group = np.cumsum(head) - 1
        summed = np.zeros(int(group[-1]) + 1, dtype=np.float64)
        np.add.at(summed, group, self.val[order].astype(np.float64))
        return CooMatrix(
            self.n_rows,
            self.n_cols,
            self.row[order][head],
            self.col[order][head],
            summed.astype(np.float32),
        )

    def to_csr(self) -> CsrMatrix:
        c = self.canonicalize()
        row_ptr = np.zeros(self.n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(c.row, minlength=self.n_rows), out=row_ptr[1:])
        return CsrMatrix(self.n_rows, self.n_cols, row_ptr, c.col, c.val)


@dataclass(frozen=True)
class DenseMatrix:
    """Row-major float32 dense matrix; all entries must be finite."""

    n_rows: int
    n_cols: int
    data: np.ndarray  # (n_rows, n_cols), C order

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.shape != (self.n_rows, self.n_cols):
            raise ValueError("data shape does not match dimensions")
        if not np.isfinite(data).all():
            raise ValueError("dense matrix entries must be finite")
        object.__setattr__(self, "data", _lock(data))

    @classmethod
    def from_array(cls, arr) -> "DenseMatrix":
        arr = np.asarray(arr, dtype=np.float32)
        return cls(arr.shape[0], arr.shape[1], arr)

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "DenseMatrix":
        return cls(n_rows, n_cols, np.zeros((n_rows, n_cols), dtype=np.float32))


@dataclass(frozen=True)
class RowStats:
    nnz_mean: float
    nnz_max: int
    long_row_ratio_2x: float  # fraction of rows with nnz > 2 * mean
    long_row_ratio_4x: float  # fraction of rows with nnz > 4 * mean
    per_row_nnz: np.ndarray


def row_stats(a: CsrMatrix) -> RowStats:
    """Per-row nonzero distribution summary."""
    counts = a.row_nnz()
    if a.n_rows == 0:
        return RowStats(0.0, 0, 0.0, 0.0, counts)
    mean = a.nnz / a.n_rows
    ratio2 = int(np.count_nonzero(counts > 2 * mean)) / a.n_rows
    ratio4 = int(np.count_nonzero(counts > 4 * mean)) / a.n_rows
    return RowStats(mean, int(counts.max(initial=0)), ratio2, ratio4, counts)


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------

# Rows at or below this nonzero count scatter their columns uniformly over the
# whole column space instead of their community pool. They model weakly
# affiliated rows whose columns rarely overlap their row neighborhood.
SCATTER_ROW_NNZ = 1

# Community length counted over the non-scatter subsequence, and the pool
# width as a multiple of the community's mean row length.
_COMMUNITY_DENSE_ROWS = 8
_POOL_FACTOR = 1.5


def _fit_counts(raw: np.ndarray, target: int, cap: int) -> np.ndarray:
    """Scale raw propensities so clipped rounded counts sum near target.

    The total is a monotone step function of the scale factor, so a bisection
    lands within one step of the smallest total >= target.
    """
    if target == 0:
        return np.zeros(raw.size, dtype=np.int64)

    def total(s: float) -> int:
        return int(np.minimum(np.rint(raw * s), cap).sum())

    hi = 1.0
    while total(hi) < target and hi < 1e18:
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if total(mid) >= target:
            hi = mid
        else:
            lo = mid
    return np.minimum(np.rint(raw * hi), cap).astype(np.int64)


def _rearrange_counts(counts: np.ndarray) -> np.ndarray:
    """Order row lengths the way degree-sorted graphs lay them out.

    Rows above SCATTER_ROW_NNZ stay in draw order but are grouped into
    consecutive runs of _COMMUNITY_DENSE_ROWS; the remaining short and empty
    rows are spread between those runs in evenly sized bursts. The length
    multiset is unchanged, only the arrangement.
    """
    dense_vals = counts[counts > SCATTER_ROW_NNZ]
    gap_vals = counts[counts <= SCATTER_ROW_NNZ]
    if dense_vals.size == 0 or gap_vals.size == 0:
        return counts
    n_comm = -(-dense_vals.size // _COMMUNITY_DENSE_ROWS)
    cuts = np.round(np.linspace(0, gap_vals.size, n_comm + 1)).astype(np.int64)
    out = np.empty(0, dtype=counts.dtype)
    pieces = []
    for c in range(n_comm):
        lo = c * _COMMUNITY_DENSE_ROWS
        pieces.append(dense_vals[lo:lo + _COMMUNITY_DENSE_ROWS])
        pieces.append(gap_vals[cuts[c]:cuts[c + 1]])
    out = np.concatenate(pieces)
    return out


def generate_power_law(
    n_rows: int, n_cols: int, target_nnz: int, skew: float, seed: int
) -> CsrMatrix:
    """Deterministic synthetic matrix with a heavy-tailed row-length profile.

    Row lengths follow a Pareto draw with tail exponent ``skew`` (smaller is
    heavier), scaled so the total lands within 5% of ``target_nnz``. Columns
    are sampled without replacement. Rows longer than SCATTER_ROW_NNZ form
    communities: consecutive runs of them share a contiguous column pool, so
    row neighborhoods overlap the way clustered graphs do, and rows longer
    than their pool spill uniformly into the remaining columns. Rows at or
    below SCATTER_ROW_NNZ scatter uniformly over all columns, interleaving
    weakly affiliated rows between community members.
    """
    if skew <= 0:
        raise ValueError("skew must be positive")
    if target_nnz < 0 or target_nnz > n_rows * n_cols:
        raise ValueError("target_nnz infeasible for the given dimensions")
    rng = np.random.default_rng(seed)
    if n_rows == 0 or n_cols == 0 or target_nnz == 0:
        return CsrMatrix(
            n_rows, n_cols, np.zeros(n_rows + 1, np.int64), np.empty(0), np.empty(0)
        )

    raw = rng.pareto(skew, n_rows) + 1.0
    counts = _rearrange_counts(_fit_counts(raw, target_nnz, n_cols))

    dense = counts > SCATTER_ROW_NNZ
    n_dense = int(np.count_nonzero(dense))
    if n_dense:
        mean_dense = float(counts[dense].mean())
        community = np.zeros(n_rows, dtype=np.int64)
        community[dense] = np.arange(n_dense) // _COMMUNITY_DENSE_ROWS
        n_comm = int(community[dense].max()) + 1
        pool_size = int(
            min(
                n_cols,
                max(16, round(_POOL_FACTOR * _COMMUNITY_DENSE_ROWS * mean_dense)),
            )
        )
        span = n_cols - pool_size
        starts = (
            np.round(np.arange(n_comm) * span / max(1, n_comm - 1)).astype(np.int64)
            if n_comm > 1
            else np.zeros(1, dtype=np.int64)
        )
    all_cols = np.arange(n_cols)

    col_chunks: list[np.ndarray] = []
    for r in range(n_rows):
        k = int(counts[r])
        if k == 0:
            col_chunks.append(np.empty(0, dtype=np.int64))
            continue
        if k <= SCATTER_ROW_NNZ:
            cols = rng.choice(n_cols, size=k, replace=False)
        else:
            start = int(starts[community[r]])
            pool = np.arange(start, start + pool_size)
            if k <= pool_size:
                cols = rng.choice(pool, size=k, replace=False)
            else:
                rest = np.concatenate(
                    [all_cols[:start], all_cols[start + pool_size:]]
                )
                extra = rng.choice(rest, size=k - pool_size, replace=False)
                cols = np.concatenate([pool, extra])
        col_chunks.append(np.sort(cols))

    col_idx = np.concatenate(col_chunks) if col_chunks else np.empty(0, np.int64)
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    values = rng.uniform(-1.0, 1.0, size=col_idx.size).astype(np.float32)
    return CsrMatrix(n_rows, n_cols, row_ptr, col_idx, values)


# ---------------------------------------------------------------------------
# reference product
# ---------------------------------------------------------------------------

def oracle_spmm(a: CsrMatrix, b: DenseMatrix) -> DenseMatrix:
    """Naive reference SpMM: C = A @ B, accumulated in f64, stored as f32."""
    if a.n_cols != b.n_rows:
        raise ValueError(
            f"dimension mismatch: A is {a.n_rows}x{a.n_cols}, B has {b.n_rows} rows"
        )
    b64 = b.data.astype(np.float64)
    v64 = a.values.astype(np.float64)
    out = np.zeros((a.n_rows, b.n_cols), dtype=np.float64)
    rp = a.row_ptr
    for r in range(a.n_rows):
        s, e = int(rp[r]), int(rp[r + 1])
        if s == e:
            continue
        out[r] = v64[s:e] @ b64[a.col_idx[s:e]]
    return DenseMatrix(a.n_rows, b.n_cols, out.astype(np.float32))


def max_relative_error(c, ref) -> float:
    """Max |c - ref| / max(|ref|, 1), elementwise over dense results."""
    ca = c.data if isinstance(c, DenseMatrix) else np.asarray(c)
    ra = ref.data if isinstance(ref, DenseMatrix) else np.asarray(ref)
    if ca.shape != ra.shape:
        raise ValueError(f"shape mismatch: {ca.shape} vs {ra.shape}")
    if ca.size == 0:
        return 0.0
    diff = np.abs(ca.astype(np.float64) - ra.astype(np.float64))
    denom = np.maximum(np.abs(ra.astype(np.float64)), 1.0)
    return float((diff / denom).max())
