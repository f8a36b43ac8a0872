"""Independent reference implementations used to cross-check the fast
kernels. Deliberately written as plain scalar loops (or textbook
algorithms) with no shared code paths with the package."""

import math

import numpy as np


def matmul_oracle(a, b):
    """Triple loop, accumulating over k in index order for each output
    cell, matching the declared fixed accumulation order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def matmul_oracle_kouter(a, b):
    """Rank-1 accumulation over k (sum of outer products), the order
    used by the vectorized reference backend."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for t in range(k):
        for i in range(m):
            for j in range(n):
                out[i, j] += a[i, t] * b[t, j]
    return out


def jacobi_eigh(matrix, sweeps=50, tol=1e-12):
    """Cyclic Jacobi eigensolver for small symmetric matrices.

    Returns (eigenvalues descending, eigenvectors as rows).
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] ** 2
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order].T


def covariance_oracle(m):
    """Textbook two-pass sample covariance with divisor B-1."""
    m = np.asarray(m, dtype=np.float64)
    b, n = m.shape
    mean = [sum(m[i, j] for i in range(b)) / b for j in range(n)]
    out = np.zeros((n, n))
    for j in range(n):
        for l in range(n):
            acc = 0.0
            for i in range(b):
                acc += (m[i, j] - mean[j]) * (m[i, l] - mean[l])
            out[j, l] = acc / (b - 1)
    return out


def softplus_scalar(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def sigmoid_scalar(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def row_energy_scalar(row):
    return sum(float(v) * float(v) for v in row)
