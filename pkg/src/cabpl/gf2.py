"""Dense GF(2) linear algebra on uint8 numpy arrays."""

import numpy as np


def kron_power(base, n):
    """n-fold Kronecker power of a small binary matrix, as uint8.

    kron_power(base, 0) is the 1x1 identity.
    """
    out = np.ones((1, 1), dtype=np.uint8)
    base = np.asarray(base, dtype=np.uint8)
    for _ in range(n):
        out = np.kron(out, base) & 1
    return out.astype(np.uint8)


def row_reduce(mat, column_order=None):
    """Gauss-Jordan elimination over GF(2).

    Pivots are searched column by column.  When ``column_order`` is given,
    columns are visited in that order and dependent columns are skipped,
    which is exactly the reprocessing rule used by ordered statistics
    decoding: a candidate column that cannot host a pivot is passed over in
    favour of the next one in the ranking.

    Returns (reduced, pivot_columns) where ``reduced`` is in reduced row
    echelon form with respect to the visited column order and
    ``pivot_columns`` lists the columns that received a pivot, one per
    independent row, in processing order.
    """
    m = np.array(mat, dtype=np.uint8) & 1
    rows, cols = m.shape
    if column_order is None:
        column_order = range(cols)
    pivot_cols = []
    r = 0
    for c in column_order:
        if r >= rows:
            break
        hits = np.nonzero(m[r:, c])[0]
        if hits.size == 0:
            continue
        pr = r + hits[0]
        if pr != r:
            m[[r, pr]] = m[[pr, r]]
        elim = np.nonzero(m[:, c])[0]
        elim = elim[elim != r]
        m[elim] ^= m[r]
        pivot_cols.append(int(c))
        r += 1
    return m, pivot_cols


def rank(mat):
    """Rank of a binary matrix over GF(2)."""
    _, pivots = row_reduce(mat)
    return len(pivots)


def inverse(mat):
    """Inverse of a square binary matrix over GF(2).

    Raises ValueError when the matrix is singular.
    """
    m = np.asarray(mat, dtype=np.uint8) & 1
    k = m.shape[0]
    if m.shape != (k, k):
        raise ValueError("matrix must be square")
    aug = np.concatenate([m, np.eye(k, dtype=np.uint8)], axis=1)
    red, pivots = row_reduce(aug, column_order=range(k))
    if len(pivots) != k:
        raise ValueError("matrix is singular over GF(2)")
    return red[:, k:].copy()


def row_space_reduced(mat):
    """Canonical basis of the row space: RREF with zero rows dropped.

    Two matrices have the same row space iff this canonical form matches.
    """
    red, pivots = row_reduce(mat)
    return red[: len(pivots)].copy()


def matmul(a, b):
    """Binary matrix product a @ b over GF(2)."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    return (a.astype(np.uint32) @ b.astype(np.uint32) & 1).astype(np.uint8)
