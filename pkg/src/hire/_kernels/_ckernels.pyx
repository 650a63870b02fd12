# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the tensor core.

Every function works on 2-D C-contiguous views; callers reshape leading
dimensions away. Float32 and float64 share one implementation through a
fused type.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expf

cnp.import_array()

ctypedef fused real:
    float
    double


def softmax_rows(real[:, ::1] x, real[:, ::1] out):
    """Row-wise softmax of ``x`` into ``out`` (max-subtracted)."""
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t cols = x.shape[1]
    cdef Py_ssize_t i, j
    cdef real mx, total, v
    with nogil:
        for i in range(rows):
            mx = x[i, 0]
            for j in range(1, cols):
                if x[i, j] > mx:
                    mx = x[i, j]
            total = 0
            for j in range(cols):
                if real is float:
                    v = expf(x[i, j] - mx)
                else:
                    v = exp(x[i, j] - mx)
                out[i, j] = v
                total = total + v
            for j in range(cols):
                out[i, j] = out[i, j] / total


def softmax_rows_backward(real[:, ::1] y, real[:, ::1] dy, real[:, ::1] dx):
    """dx = y * (dy - sum(dy * y)) per row."""
    cdef Py_ssize_t rows = y.shape[0]
    cdef Py_ssize_t cols = y.shape[1]
    cdef Py_ssize_t i, j
    cdef real dot
    with nogil:
        for i in range(rows):
            dot = 0
            for j in range(cols):
                dot = dot + dy[i, j] * y[i, j]
            for j in range(cols):
                dx[i, j] = y[i, j] * (dy[i, j] - dot)


def scatter_add_rows(real[:, ::1] out, const cnp.int64_t[::1] index, real[:, ::1] src):
    """out[index[r]] += src[r] for every r, duplicates accumulate."""
    cdef Py_ssize_t n = index.shape[0]
    cdef Py_ssize_t cols = src.shape[1]
    cdef Py_ssize_t r, j, target
    cdef Py_ssize_t limit = out.shape[0]
    for r in range(n):
        target = index[r]
        if target < 0 or target >= limit:
            raise IndexError(f"row index {target} out of range for {limit} rows")
    with nogil:
        for r in range(n):
            target = index[r]
            for j in range(cols):
                out[target, j] = out[target, j] + src[r, j]
