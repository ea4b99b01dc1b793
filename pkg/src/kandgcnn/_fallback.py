"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Arithmetic is ordered to match the compiled loops operation for operation, so
both backends agree bit-for-bit on IEEE doubles.
"""
import numpy as np


def knn_indices(x, k):
    n, nf = x.shape
    dist = np.zeros((n, n))
    for f in range(nf):
        diff = x[:, None, f] - x[None, :, f]
        dist += diff * diff
    np.fill_diagonal(dist, np.inf)
    # stable sort keeps the lower index first among equal distances
    order = np.argsort(dist, axis=1, kind="stable")
    return np.ascontiguousarray(order[:, :k], dtype=np.int64)


def recurrence_table(gamma, a, b, c, slope, intercept, degree):
    m = gamma.shape[0]
    values = np.empty((m, degree + 1))
    derivs = np.empty((m, degree + 1))
    values[:, 0] = 1.0
    derivs[:, 0] = 0.0
    if degree == 0:
        return values, derivs
    p2 = np.ones(m)
    d2 = np.zeros(m)
    p1 = slope * gamma + intercept
    d1 = np.full(m, slope)
    values[:, 1] = p1
    derivs[:, 1] = d1
    for kk in range(2, degree + 1):
        lin = a[kk] * gamma + b[kk]
        p = lin * p1 + c[kk] * p2
        dp = a[kk] * p1 + lin * d1 + c[kk] * d2
        values[:, kk] = p
        derivs[:, kk] = dp
        p2, p1 = p1, p
        d2, d1 = d1, dp
    return values, derivs


def scatter_add_rows(target, index, src):
    np.add.at(target, index, src)
