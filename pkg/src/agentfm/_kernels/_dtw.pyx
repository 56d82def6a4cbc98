# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DTW kernels (absolute-difference cost, unconstrained warping)."""

import numpy as np

from libc.math cimport fabs, INFINITY
from libc.stdlib cimport malloc, free


cdef double _dtw(const double* a, Py_ssize_t n, const double* b, Py_ssize_t m,
                 double* prev, double* cur) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double best, ai
    cdef double* tmp
    prev[0] = 0.0
    for j in range(1, m + 1):
        prev[j] = INFINITY
    for i in range(1, n + 1):
        cur[0] = INFINITY
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = fabs(ai - b[j - 1]) + best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[m]


def dtw_distance(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef double* buf = <double*> malloc(2 * (m + 1) * sizeof(double))
    cdef double d
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            d = _dtw(&a[0], n, &b[0], m, buf, buf + m + 1)
    finally:
        free(buf)
    return d


def dtw_matrix_flat(const double[::1] va, const Py_ssize_t[::1] oa,
                    const double[::1] vb, const Py_ssize_t[::1] ob,
                    bint symmetric=False):
    """Pairwise distances between packed sequence sets.

    Sequence ``i`` of side A is ``va[oa[i]:oa[i+1]]``. With ``symmetric`` the
    two sides are the same set and only the upper triangle is computed.
    """
    cdef Py_ssize_t na = oa.shape[0] - 1, nb = ob.shape[0] - 1
    cdef Py_ssize_t i, j, j0, maxm = 0
    out = np.zeros((na, nb), dtype=np.float64)
    cdef double[:, ::1] res = out
    for j in range(nb):
        if ob[j + 1] - ob[j] > maxm:
            maxm = ob[j + 1] - ob[j]
    cdef double* buf = <double*> malloc(2 * (maxm + 1) * sizeof(double))
    cdef double d
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(na):
                j0 = i + 1 if symmetric else 0
                for j in range(j0, nb):
                    d = _dtw(&va[oa[i]], oa[i + 1] - oa[i], &vb[ob[j]], ob[j + 1] - ob[j],
                             buf, buf + maxm + 1)
                    res[i, j] = d
                    if symmetric:
                        res[j, i] = d
    finally:
        free(buf)
    return out
