# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled matmul kernel with a fixed accumulation order.

Every output element C[i, j] accumulates a[i, p] * b[p, j] in increasing p,
starting from 0.0, with one rounding per multiply and one per add.  The i-p-j
loop nest keeps the inner loop contiguous (vectorizable without reordering
the per-element accumulation chain), so results are bit-identical to a naive
i-j-p triple loop and to the pure-numpy reference backend.
"""

import numpy as np


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("inner dimensions differ")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return out
