"""Pure-numpy fallback for the sparse kernels.

Same contracts as the compiled module: the support is stored grouped by
hidden unit (indptr/rows in column-major support order).
"""

import numpy as np


def _segment_sums(contrib, indptr):
    # np.add.reduceat mishandles empty segments, so reduce only over the
    # non-empty ones and leave the rest at zero.
    n_seg = indptr.shape[0] - 1
    out = np.zeros((contrib.shape[0], n_seg))
    widths = np.diff(indptr)
    nz = np.flatnonzero(widths > 0)
    if nz.size:
        out[:, nz] = np.add.reduceat(contrib, indptr[nz], axis=1)
    return out


def hidden_preact(v, indptr, rows, w, b):
    """Pre-activation of every hidden unit: out[n,j] = b[j] + sum_i W[i,j] v[n,i]."""
    contrib = v[:, rows] * w
    return _segment_sums(contrib, indptr) + b


def visible_preact(h, indptr, rows, w, a, *, row_indptr, row_hids, row_perm):
    """Pre-activation of every visible unit: out[n,i] = a[i] + sum_j W[i,j] h[n,j].

    Needs the row-major view of the support (precomputed on the structure)
    so the reduction can run segment-wise per visible unit.
    """
    contrib = h[:, row_hids] * w[row_perm]
    return _segment_sums(contrib, row_indptr) + a


def support_outer(v, h, indptr, rows, *, cols):
    """Batch outer product v^T h evaluated only at support positions."""
    return np.einsum("nk,nk->k", v[:, rows], h[:, cols])
