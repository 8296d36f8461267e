"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

The three hot operations of sparse training (hidden/visible pre-activations
and the support-restricted outer product) live behind this module.  Set the
environment variable PATCHRBM_KERNELS to "numpy" or "cython" to force a
backend, or call set_default_backend() at runtime.
"""

import os

import numpy as np

from . import numpy_backend

try:
    from . import _sparse_ops
except ImportError:
    _sparse_ops = None

_env = os.environ.get("PATCHRBM_KERNELS", "").strip().lower()
if _env == "cython" and _sparse_ops is None:
    raise ImportError("PATCHRBM_KERNELS=cython but the compiled extension is not built")
_default = _env if _env in ("cython", "numpy") else ("cython" if _sparse_ops else "numpy")


def available_backends():
    return ("cython", "numpy") if _sparse_ops is not None else ("numpy",)


def default_backend():
    return _default


def set_default_backend(name):
    global _default
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    _default = name


def _ascontig(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def hidden_preact(v, structure, w, b, backend=None):
    """b + v W over the support, for a batch of visible rows v (n, n_v)."""
    backend = backend or _default
    if backend == "cython":
        return _sparse_ops.hidden_preact(_ascontig(v), structure.col_indptr,
                                         structure.col_rows, _ascontig(w), _ascontig(b))
    return numpy_backend.hidden_preact(v, structure.col_indptr, structure.col_rows, w, b)


def visible_preact(h, structure, w, a, backend=None):
    """a + h W^T over the support, for a batch of hidden rows h (n, n_h)."""
    backend = backend or _default
    if backend == "cython":
        return _sparse_ops.visible_preact(_ascontig(h), structure.col_indptr,
                                          structure.col_rows, _ascontig(w), _ascontig(a))
    row_indptr, row_hids, row_perm = structure.row_arrays()
    return numpy_backend.visible_preact(h, structure.col_indptr, structure.col_rows, w, a,
                                        row_indptr=row_indptr, row_hids=row_hids,
                                        row_perm=row_perm)


def support_outer(v, h, structure, backend=None):
    """sum_n v[n,i] h[n,j] for every support position (i,j), in support order."""
    backend = backend or _default
    if backend == "cython":
        return _sparse_ops.support_outer(_ascontig(v), _ascontig(h),
                                         structure.col_indptr, structure.col_rows)
    return numpy_backend.support_outer(v, h, structure.col_indptr, structure.col_rows,
                                       cols=structure.col_hids)
