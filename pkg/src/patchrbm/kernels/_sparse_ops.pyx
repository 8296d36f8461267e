# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the support-restricted weight matrix.

The support is stored grouped by hidden unit: hidden unit j owns the slice
indptr[j]:indptr[j+1] of rows/w (visible indices and weight values).
"""

import numpy as np

cimport numpy as cnp


def hidden_preact(double[:, ::1] v, cnp.int64_t[::1] indptr,
                  cnp.int64_t[::1] rows, double[::1] w, double[::1] b):
    """Pre-activation of every hidden unit: out[n,j] = b[j] + sum_i W[i,j] v[n,i]."""
    cdef Py_ssize_t n_rows = v.shape[0]
    cdef Py_ssize_t n_h = indptr.shape[0] - 1
    cdef Py_ssize_t n, j, k
    cdef double acc
    out_arr = np.empty((n_rows, n_h), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for n in range(n_rows):
            for j in range(n_h):
                acc = b[j]
                for k in range(indptr[j], indptr[j + 1]):
                    acc += w[k] * v[n, rows[k]]
                out[n, j] = acc
    return out_arr


def visible_preact(double[:, ::1] h, cnp.int64_t[::1] indptr,
                   cnp.int64_t[::1] rows, double[::1] w, double[::1] a):
    """Pre-activation of every visible unit: out[n,i] = a[i] + sum_j W[i,j] h[n,j]."""
    cdef Py_ssize_t n_rows = h.shape[0]
    cdef Py_ssize_t n_h = indptr.shape[0] - 1
    cdef Py_ssize_t n_v = a.shape[0]
    cdef Py_ssize_t n, j, k
    cdef double hv
    out_arr = np.empty((n_rows, n_v), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for n in range(n_rows):
            for k in range(n_v):
                out[n, k] = a[k]
            for j in range(n_h):
                hv = h[n, j]
                for k in range(indptr[j], indptr[j + 1]):
                    out[n, rows[k]] += w[k] * hv
    return out_arr


def support_outer(double[:, ::1] v, double[:, ::1] h,
                  cnp.int64_t[::1] indptr, cnp.int64_t[::1] rows):
    """Batch outer product v^T h evaluated only at support positions."""
    cdef Py_ssize_t n_rows = v.shape[0]
    cdef Py_ssize_t n_h = indptr.shape[0] - 1
    cdef Py_ssize_t nnz = rows.shape[0]
    cdef Py_ssize_t n, j, k
    cdef double hv
    out_arr = np.zeros(nnz, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for n in range(n_rows):
            for j in range(n_h):
                hv = h[n, j]
                for k in range(indptr[j], indptr[j + 1]):
                    out[k] += v[n, rows[k]] * hv
    return out_arr
