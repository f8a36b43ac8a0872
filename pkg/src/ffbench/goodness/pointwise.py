"""Goodness objectives that read one activation row at a time."""

import numpy as np

from .. import tensor
from ..errors import GoodnessOverflowError
from .types import GoodnessResult

__all__ = ["POINTWISE_MODES", "goodness_pointwise"]

# Guard for the normalized-energy denominator, pinned independently of
# the covariance shrinkage parameter.
NORM_GUARD_EPS = 1e-6

# exp argument ceiling before float64 overflow.
EXP_ARG_LIMIT = 700.0


def _sum_of_squares(h, params, aux=None):
    values = tensor.row_reduce(h * h, "sum")
    return GoodnessResult(values, 2.0 * h)


def _l2_normalized(h, params, aux=None):
    norms = tensor.row_reduce(h, "l2norm")
    denom = norms + NORM_GUARD_EPS
    sumsq = tensor.row_reduce(h * h, "sum")
    values = sumsq / (denom * denom)
    # d/dh_i [ s / d^2 ] = 2 h_i / d^2 - 2 s h_i / (n d^3), n = ||h||
    grad = 2.0 * h / (denom * denom)
    nonzero = norms[:, 0] > 0
    if nonzero.any():
        correction = 2.0 * sumsq[nonzero] / (norms[nonzero] * denom[nonzero] ** 3)
        grad[nonzero] -= correction * h[nonzero]
    return GoodnessResult(values, grad)


def _huber(h, params, aux=None):
    delta = params.delta
    small = np.abs(h) <= delta
    per_coord = np.where(
        small, 0.5 * h * h, delta * (np.abs(h) - 0.5 * delta)
    )
    values = tensor.row_reduce(per_coord, "sum")
    grad = np.where(small, h, delta * np.sign(h))
    return GoodnessResult(values, grad)


def _tempered(h, params, aux=None):
    t = params.temperature
    scaled = h * h / t
    worst = scaled.max() if scaled.size else 0.0
    if worst > EXP_ARG_LIMIT:
        raise GoodnessOverflowError(
            f"tempered_energy: squared activation / T exceeds {EXP_ARG_LIMIT:.0f} "
            f"(T={t}); the exponential would overflow"
        )
    boltz = np.exp(scaled)
    values = tensor.row_reduce(boltz, "sum")
    grad = boltz * 2.0 * h / t
    return GoodnessResult(values, grad)


def _outlier_trimmed(h, params, aux=None):
    n = h.shape[1]
    energies = h * h
    if aux is not None:
        keep = aux["keep_mask"]
    else:
        trim = int(np.floor(params.trim_fraction * n))
        # stable argsort, so ties trim deterministically
        order = np.argsort(energies, axis=1, kind="stable")
        keep = np.ones_like(h, dtype=bool)
        if trim:
            rows = np.arange(h.shape[0])[:, None]
            keep[rows, order[:, n - trim:]] = False
    values = tensor.row_reduce(np.where(keep, energies, 0.0), "sum")
    grad = np.where(keep, 2.0 * h, 0.0)
    return GoodnessResult(values, grad, aux={"keep_mask": keep})


def _oja(h, params, aux=None):
    alpha = params.oja_alpha
    sq = h * h
    values = tensor.row_reduce(sq - alpha * sq * sq, "sum")
    grad = 2.0 * h - 4.0 * alpha * h * sq
    return GoodnessResult(values, grad)


def _sparse_l1(h, params, aux=None):
    lam = params.l1_lambda
    values = tensor.row_reduce(h * h - lam * np.abs(h), "sum")
    grad = 2.0 * h - lam * np.sign(h)
    return GoodnessResult(values, grad)


POINTWISE_MODES = {
    "sum_of_squares": _sum_of_squares,
    "l2_normalized": _l2_normalized,
    "huber": _huber,
    "tempered": _tempered,
    "outlier_trimmed": _outlier_trimmed,
    "oja": _oja,
    "sparse_l1": _sparse_l1,
}


def goodness_pointwise(mode, h, params, frozen_aux=None):
    """Per-row goodness and gradient for the row-local objectives.

    `frozen_aux` re-applies quantities the gradient treats as constant
    (the trim mask); the finite-difference checks rely on it.
    """
    if mode not in POINTWISE_MODES:
        raise ValueError(
            f"unknown pointwise mode {mode!r}, expected one of "
            f"{sorted(POINTWISE_MODES)}"
        )
    h = tensor.as_matrix(h, "pointwise activations")
    return POINTWISE_MODES[mode](h, params, aux=frozen_aux)
