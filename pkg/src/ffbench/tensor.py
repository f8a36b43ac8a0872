"""Deterministic dense float64 operations and the seeded RNG.

Every matrix in this package is a C-contiguous 2-D float64 ndarray.
All products go through :func:`matmul`, which has a fixed accumulation
order (see ffbench.backends) and reports its FLOP count to an optional
hook so a run's compute cost can be metered exactly.
"""

import zlib

import numpy as np

from .errors import (
    ConvergenceError,
    EmptyMatrixError,
    NonFiniteError,
    NotSymmetricError,
    ShapeMismatchError,
)
from . import backends

__all__ = [
    "as_matrix",
    "matmul",
    "row_reduce",
    "batch_covariance",
    "top_k_components",
    "inverse_sqrt_spd",
    "finite_difference_gradient",
    "set_flop_hook",
    "softplus",
    "sigmoid",
    "Rng",
]

# Single writer per run; the cost meter installs itself around a run.
_flop_hook = None


def set_flop_hook(hook):
    """Install `hook(op_kind, flop_count)`; returns the previous hook."""
    global _flop_hook
    previous = _flop_hook
    _flop_hook = hook
    return previous


def _report_flops(op_kind, count):
    if _flop_hook is not None:
        _flop_hook(op_kind, count)


def as_matrix(x, name="matrix"):
    """Validate/convert to a finite C-contiguous 2-D float64 array."""
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatchError(f"{name}: expected 2-D, got shape {m.shape}")
    if m.size and not np.isfinite(m).all():
        raise NonFiniteError(f"{name}: contains NaN or Inf")
    return m


def matmul(a, b):
    """Matrix product with deterministic accumulation; FLOPs = 2*m*k*n."""
    a = as_matrix(a, "matmul lhs")
    b = as_matrix(b, "matmul rhs")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: inner dimensions differ, {a.shape} x {b.shape}"
        )
    out = backends.matmul(a, b)
    _report_flops("matmul", 2 * a.shape[0] * a.shape[1] * b.shape[1])
    if out.size and not np.isfinite(out).all():
        raise NonFiniteError("matmul: product overflowed to non-finite values")
    return out


_ROW_KINDS = ("sum", "mean", "l2norm", "max", "min")


def row_reduce(m, kind):
    """Per-row reduction to a B x 1 column. kind in {sum,mean,l2norm,max,min}."""
    m = as_matrix(m, "row_reduce input")
    if m.size == 0:
        raise EmptyMatrixError("row_reduce: empty matrix")
    if kind == "sum":
        out = m.sum(axis=1)
    elif kind == "mean":
        out = m.mean(axis=1)
    elif kind == "l2norm":
        out = np.sqrt((m * m).sum(axis=1))
    elif kind == "max":
        out = m.max(axis=1)
    elif kind == "min":
        out = m.min(axis=1)
    else:
        raise ValueError(f"row_reduce: unknown kind {kind!r}, expected one of {_ROW_KINDS}")
    return np.ascontiguousarray(out.reshape(-1, 1))


def batch_covariance(m):
    """Sample covariance over rows, divisor B-1.

    Element (i, j) and (j, i) are accumulated in the same order from
    identical products, so the result is bitwise symmetric.
    """
    m = as_matrix(m, "batch_covariance input")
    if m.shape[0] < 2:
        raise ShapeMismatchError(
            f"batch_covariance: need at least 2 rows, got {m.shape[0]}"
        )
    centered = m - m.mean(axis=0, keepdims=True)
    return matmul(centered.T, centered) / (m.shape[0] - 1)


def _check_symmetric(c, name, tol=1e-8):
    if c.shape[0] != c.shape[1]:
        raise ShapeMismatchError(f"{name}: expected square matrix, got {c.shape}")
    asym = np.abs(c - c.T).max() if c.size else 0.0
    if asym > tol:
        raise NotSymmetricError(f"{name}: asymmetry {asym:.3e} exceeds {tol:.0e}")


def top_k_components(cov, k, iters=100):
    """Leading k eigenvectors of a symmetric matrix, one row each.

    Power iteration; each candidate is re-orthogonalized against the
    components already found every step, which deflates the spectrum
    without modifying `cov`. The start vectors come from a fixed
    internal seed so repeated calls are identical.
    """
    cov = as_matrix(cov, "top_k_components input")
    _check_symmetric(cov, "top_k_components")
    n = cov.shape[0]
    if not 1 <= k <= n:
        raise ShapeMismatchError(f"top_k_components: k={k} outside [1, {n}]")
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(0x7C0FFEE)))
    comps = np.zeros((k, n))

    def drop_found_directions(vec, count):
        if not count:
            return vec
        coeffs = matmul(comps[:count], vec.reshape(-1, 1))
        return vec - matmul(comps[:count].T, coeffs).ravel()

    for i in range(k):
        v = gen.standard_normal(n)
        for _ in range(iters):
            v = drop_found_directions(v, i)
            nv = np.sqrt((v * v).sum())
            if nv < 1e-30:
                # start landed in the span of earlier components or the
                # null space; any orthogonal direction is a valid 0-eigvec
                v = gen.standard_normal(n)
                continue
            v = v / nv
            v = matmul(cov, v.reshape(-1, 1)).ravel()
        v = drop_found_directions(v, i)
        nv = np.sqrt((v * v).sum())
        if nv < 1e-30:
            v = drop_found_directions(gen.standard_normal(n), i)
            nv = np.sqrt((v * v).sum())
        comps[i] = v / nv
    return comps


def component_eigenvalues(cov, comps):
    """Rayleigh quotients v' C v for unit rows v of `comps`."""
    cov = as_matrix(cov, "component_eigenvalues input")
    comps = as_matrix(comps, "component_eigenvalues components")
    products = matmul(comps, cov)
    return (products * comps).sum(axis=1)


def inverse_sqrt_spd(cov, shrinkage, iters=40):
    """(cov + shrinkage*I)^(-1/2) by the coupled Newton-Schulz iteration.

    The input is scaled by its Frobenius norm, which bounds the spectrum
    of the scaled matrix in (0, 1] for SPD input and guarantees
    convergence; growth of the Y iterate signals a non-SPD or badly
    conditioned input and raises instead of returning garbage.
    """
    cov = as_matrix(cov, "inverse_sqrt_spd input")
    _check_symmetric(cov, "inverse_sqrt_spd")
    if shrinkage <= 0:
        raise ValueError(f"inverse_sqrt_spd: shrinkage must be > 0, got {shrinkage}")
    n = cov.shape[0]
    a = cov + shrinkage * np.eye(n)
    scale = np.sqrt((a * a).sum())
    eye = np.eye(n)
    y = a / scale
    z = eye.copy()
    y0_norm = np.sqrt((y * y).sum())
    cond_estimate = scale / shrinkage
    for _ in range(iters):
        t = 1.5 * eye - 0.5 * matmul(z, y)
        y = matmul(y, t)
        z = matmul(t, z)
        y_norm = np.sqrt((y * y).sum())
        if not np.isfinite(y_norm) or y_norm > 10.0 * max(y0_norm, np.sqrt(n)):
            raise ConvergenceError(
                "inverse_sqrt_spd: Newton-Schulz iterate diverged "
                f"(condition estimate {cond_estimate:.3e})"
            )
    w = z / np.sqrt(scale)
    return (w + w.T) / 2.0


def finite_difference_gradient(f, at, eps):
    """Central-difference gradient of a scalar function, entry by entry."""
    at = as_matrix(at, "finite_difference_gradient point")
    if eps <= 0:
        raise ValueError(f"finite_difference_gradient: eps must be > 0, got {eps}")
    out = np.zeros_like(at)
    for i in range(at.shape[0]):
        for j in range(at.shape[1]):
            bumped = at.copy()
            bumped[i, j] = at[i, j] + eps
            f_plus = float(f(bumped))
            bumped[i, j] = at[i, j] - eps
            f_minus = float(f(bumped))
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(
                    f"finite_difference_gradient: f non-finite at entry ({i}, {j})"
                )
            out[i, j] = (f_plus - f_minus) / (2.0 * eps)
    return out


def softplus(x):
    """log(1 + exp(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    """1 / (1 + exp(-x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


class Rng:
    """Counter-based (Philox) generator with named child streams.

    Identical seeds give identical draw sequences on every platform.
    Children are keyed by a CRC32 of their name appended to the parent's
    entropy tuple, so independent pipeline stages never share a stream.
    """

    def __init__(self, seed, _entropy=None):
        self.seed = int(seed)
        self._entropy = _entropy if _entropy is not None else (self.seed,)
        self._gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(self._entropy))
        )

    def child(self, name):
        return Rng(self.seed, self._entropy + (zlib.crc32(name.encode("utf-8")),))

    def standard_normal(self, shape):
        return self._gen.standard_normal(shape)

    def uniform(self, low, high, shape=None):
        return self._gen.uniform(low, high, shape)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def get_state(self):
        state = self._gen.bit_generator.state
        return {
            "entropy": list(self._entropy),
            "counter": state["state"]["counter"].tolist(),
            "key": state["state"]["key"].tolist(),
            "buffer": state["buffer"].tolist(),
            "buffer_pos": int(state["buffer_pos"]),
            "has_uint32": int(state["has_uint32"]),
            "uinteger": int(state["uinteger"]),
        }

    def set_state(self, saved):
        self._entropy = tuple(int(v) for v in saved["entropy"])
        state = self._gen.bit_generator.state
        state["state"]["counter"] = np.array(saved["counter"], dtype=np.uint64)
        state["state"]["key"] = np.array(saved["key"], dtype=np.uint64)
        state["buffer"] = np.array(saved["buffer"], dtype=np.uint64)
        state["buffer_pos"] = saved["buffer_pos"]
        state["has_uint32"] = saved["has_uint32"]
        state["uinteger"] = saved["uinteger"]
        self._gen.bit_generator.state = state
