"""Pure-numpy matmul backend, bit-identical to the compiled kernel.

The k-outer rank-1 update accumulates a[i, p] * b[p, j] into each output
element in increasing p, with separate multiply and add roundings, which is
exactly the compiled kernel's accumulation chain.  Slower (one numpy call
per inner dimension) but dependency-free.
"""

import numpy as np


def matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float64)
    for p in range(k):
        out += a[:, p : p + 1] * b[p : p + 1, :]
    return out
