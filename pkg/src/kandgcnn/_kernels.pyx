# cython: language_level=3
"""Compiled hot loops. Call through ``kandgcnn.kernels``, which validates inputs."""
import numpy as np

from libc.math cimport INFINITY


def knn_indices(const double[:, ::1] x, Py_ssize_t k):
    cdef Py_ssize_t n = x.shape[0], nf = x.shape[1]
    cdef Py_ssize_t i, j, f, pos
    cdef double d, diff
    out = np.empty((n, k), dtype=np.int64)
    cdef long long[:, ::1] nbr = out
    best_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] best = best_arr
    cdef Py_ssize_t filled
    with nogil:
        for i in range(n):
            filled = 0
            for j in range(n):
                if j == i:
                    continue
                d = 0.0
                for f in range(nf):
                    diff = x[i, f] - x[j, f]
                    d = d + diff * diff
                if filled == k and not (d < best[k - 1]):
                    continue
                # j ascends, so an equal distance never displaces an earlier index
                pos = filled if filled < k else k - 1
                while pos > 0 and best[pos - 1] > d:
                    best[pos] = best[pos - 1]
                    nbr[i, pos] = nbr[i, pos - 1]
                    pos -= 1
                best[pos] = d
                nbr[i, pos] = j
                if filled < k:
                    filled += 1
    return out


def recurrence_table(const double[::1] gamma, const double[::1] a, const double[::1] b,
                     const double[::1] c, double slope, double intercept, Py_ssize_t degree):
    cdef Py_ssize_t m = gamma.shape[0], i, kk
    values_arr = np.empty((m, degree + 1), dtype=np.float64)
    derivs_arr = np.empty((m, degree + 1), dtype=np.float64)
    cdef double[:, ::1] v = values_arr
    cdef double[:, ::1] dv = derivs_arr
    cdef double g, p1, p2, d1, d2, p, dp, lin
    with nogil:
        for i in range(m):
            g = gamma[i]
            v[i, 0] = 1.0
            dv[i, 0] = 0.0
            if degree == 0:
                continue
            p2 = 1.0
            d2 = 0.0
            p1 = slope * g + intercept
            d1 = slope
            v[i, 1] = p1
            dv[i, 1] = d1
            for kk in range(2, degree + 1):
                lin = a[kk] * g + b[kk]
                p = lin * p1 + c[kk] * p2
                dp = a[kk] * p1 + lin * d1 + c[kk] * d2
                v[i, kk] = p
                dv[i, kk] = dp
                p2 = p1
                p1 = p
                d2 = d1
                d1 = dp
    return values_arr, derivs_arr


def scatter_add_rows(double[:, ::1] target, const long long[::1] index, const double[:, ::1] src):
    cdef Py_ssize_t e, f, ne = index.shape[0], nf = src.shape[1]
    cdef long long row
    with nogil:
        for e in range(ne):
            row = index[e]
            for f in range(nf):
                target[row, f] = target[row, f] + src[e, f]
