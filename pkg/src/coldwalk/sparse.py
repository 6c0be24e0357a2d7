"""CSR kernels shared by every model in the package.

All matrices are ``scipy.sparse.csr_matrix`` in canonical form: column
indices sorted within each row, no duplicate entries, no explicitly stored
zeros. ``check_csr`` is the single entry point that enforces this; every
kernel below both accepts and returns canonical CSR.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

# Product entries below this magnitude are numerical noise from cancellation
# and are dropped so sparsity stays honest across chained multiplications.
PRODUCT_DROP_TOL = 1e-15


def check_csr(m, dtype=np.float64, copy: bool = False) -> sp.csr_matrix:
    """Coerce dense/sparse input to canonical float64 CSR."""
    if sp.issparse(m):
        out = m.tocsr(copy=copy)
    else:
        out = sp.csr_matrix(np.asarray(m, dtype=dtype))
    if out.dtype != dtype:
        out = out.astype(dtype)
    stored_zeros = out.nnz > 0 and not out.data.all()
    if not out.has_canonical_format or stored_zeros:
        if out is m:
            out = out.copy()
        out.sum_duplicates()
        out.sort_indices()
        out.eliminate_zeros()
    return out


def row_normalize(m) -> sp.csr_matrix:
    """Scale each row to sum to 1; all-zero rows are left all-zero.

    Rejects matrices with negative entries, since the result is meant to be
    a row-stochastic transition matrix.
    """
    m = check_csr(m)
    if m.nnz and m.data.min() < 0.0:
        raise ValueError("row_normalize requires nonnegative values")
    sums = np.asarray(m.sum(axis=1)).ravel()
    scale = np.zeros_like(sums)
    nonzero = sums != 0.0
    scale[nonzero] = 1.0 / sums[nonzero]
    out = m.copy()
    out.data = m.data * np.repeat(scale, np.diff(m.indptr))
    return out


def spmm(a, b) -> sp.csr_matrix:
    """Sparse matrix product a @ b with sub-tolerance entries dropped."""
    a = check_csr(a)
    b = check_csr(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    out = (a @ b).tocsr()
    out.data[np.abs(out.data) < PRODUCT_DROP_TOL] = 0.0
    out.eliminate_zeros()
    out.sort_indices()
    return out


def transpose(m) -> sp.csr_matrix:
    """Transpose, returned in canonical CSR form."""
    return check_csr(check_csr(m).transpose())


def scale_columns(m, v) -> sp.csr_matrix:
    """Multiply column j of ``m`` by ``v[j]``; zero factors drop entries."""
    m = check_csr(m)
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] != m.shape[1]:
        raise ValueError(
            f"scale vector has length {v.shape[0]}, expected {m.shape[1]} columns"
        )
    if not np.all(np.isfinite(v)):
        raise ValueError("scale vector contains non-finite entries")
    out = m.copy()
    out.data = m.data * v[m.indices]
    out.eliminate_zeros()
    return out


def top_k_per_row(m, k: int) -> sp.csr_matrix:
    """Keep the k largest-value entries of each row.

    Ties are broken in favor of the smaller column index, so the result is
    deterministic. Rows with at most k entries are kept whole.
    """
    m = check_csr(m)
    if k < 1:
        raise ValueError("k must be >= 1")
    indptr = np.zeros(m.shape[0] + 1, dtype=np.int64)
    kept_indices = []
    kept_data = []
    for i in range(m.shape[0]):
        lo, hi = m.indptr[i], m.indptr[i + 1]
        cols = m.indices[lo:hi]
        vals = m.data[lo:hi]
        if hi - lo > k:
            # stable sort on negated values: equal values keep ascending
            # column order, so the smaller column index wins the tie
            order = np.argsort(-vals, kind="stable")[:k]
            order.sort()
            cols = cols[order]
            vals = vals[order]
        kept_indices.append(cols)
        kept_data.append(vals)
        indptr[i + 1] = indptr[i] + cols.size
    indices = np.concatenate(kept_indices) if kept_indices else np.array([], dtype=m.indices.dtype)
    data = np.concatenate(kept_data) if kept_data else np.array([], dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=m.shape)


def top_k_per_column(m, k: int) -> sp.csr_matrix:
    """Keep the k largest-value entries of each column (see top_k_per_row)."""
    return transpose(top_k_per_row(transpose(m), k))
