# Compiled counterparts of _kernels_py.py. Same contracts, same tie rules.

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

ctypedef fused floating:
    float
    double


def pairwise_sqdist(floating[:, ::1] feats):
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t f = feats.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, c
    cdef double acc, d
    for i in range(n):
        o[i, i] = 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for c in range(f):
                d = <double> feats[i, c] - <double> feats[j, c]
                acc += d * d
            o[i, j] = acc
            o[j, i] = acc
    return out


def knn_select(double[:, ::1] d2, Py_ssize_t k):
    cdef Py_ssize_t n = d2.shape[0]
    cdef cnp.ndarray[long long, ndim=2] out = np.empty((n, k), dtype=np.int64)
    cdef long long[:, ::1] o = out
    cdef double[::1] best_d = np.empty(k, dtype=np.float64)
    cdef long long[::1] best_i = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t i, j, m, pos, filled
    cdef double d
    for i in range(n):
        filled = 0
        for j in range(n):
            if j == i:
                continue
            d = d2[i, j]
            if filled == k and not _beats(d, j, best_d[k - 1], best_i[k - 1]):
                continue
            # insertion position by (distance, index)
            pos = filled if filled < k else k - 1
            while pos > 0 and _beats(d, j, best_d[pos - 1], best_i[pos - 1]):
                pos -= 1
            m = filled if filled < k else k - 1
            while m > pos:
                best_d[m] = best_d[m - 1]
                best_i[m] = best_i[m - 1]
                m -= 1
            best_d[pos] = d
            best_i[pos] = j
            if filled < k:
                filled += 1
        for m in range(k):
            o[i, m] = best_i[m]
    return out


cdef inline bint _beats(double d, Py_ssize_t j, double d_ref, long long j_ref) nogil:
    if d < d_ref:
        return True
    if d == d_ref and j < j_ref:
        return True
    return False


def edge_concat(floating[:, ::1] feats, long long[:, ::1] idx):
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t f = feats.shape[1]
    cdef Py_ssize_t k = idx.shape[1]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, k, 2 * f), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, m, c
    cdef long long j
    for i in range(n):
        for m in range(k):
            j = idx[i, m]
            for c in range(f):
                out[i, m, c] = feats[i, c]
                out[i, m, f + c] = feats[j, c] - feats[i, c]
    return out_arr


def edge_concat_backward(floating[:, :, ::1] gout, long long[:, ::1] idx):
    cdef Py_ssize_t n = gout.shape[0]
    cdef Py_ssize_t k = gout.shape[1]
    cdef Py_ssize_t f = gout.shape[2] // 2
    dtype = np.float32 if floating is float else np.float64
    grad_arr = np.zeros((n, f), dtype=dtype)
    cdef floating[:, ::1] grad = grad_arr
    cdef Py_ssize_t i, m, c
    cdef long long j
    for i in range(n):
        for m in range(k):
            j = idx[i, m]
            for c in range(f):
                grad[i, c] += gout[i, m, c] - gout[i, m, f + c]
                grad[j, c] += gout[i, m, f + c]
    return grad_arr


def max_first(floating[:, ::1] x):
    cdef Py_ssize_t k = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    dtype = np.float32 if floating is float else np.float64
    vals_arr = np.empty(m, dtype=dtype)
    arg_arr = np.zeros(m, dtype=np.int64)
    cdef floating[::1] vals = vals_arr
    cdef long long[::1] arg = arg_arr
    cdef Py_ssize_t r, c
    for c in range(m):
        vals[c] = x[0, c]
    for r in range(1, k):
        for c in range(m):
            if x[r, c] > vals[c]:
                vals[c] = x[r, c]
                arg[c] = r
    return vals_arr, arg_arr


def max_first_backward(floating[::1] gout, long long[::1] arg, Py_ssize_t k):
    cdef Py_ssize_t m = gout.shape[0]
    dtype = np.float32 if floating is float else np.float64
    grad_arr = np.zeros((k, m), dtype=dtype)
    cdef floating[:, ::1] grad = grad_arr
    cdef Py_ssize_t c
    for c in range(m):
        grad[arg[c], c] = gout[c]
    return grad_arr
