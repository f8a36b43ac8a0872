"""Goodness objectives that read the whole batch or frozen projections.

Only decorrelation couples samples at evaluation time (through the batch
covariance); the others depend on frozen per-layer state (whitening W,
component basis P, running spread) or on per-row derived weights that
the gradient treats as constants.
"""

import numpy as np

from .. import tensor
from ..errors import ShapeMismatchError
from .types import GoodnessResult

__all__ = ["BATCH_MODES", "goodness_batch"]

BOX_COUNT_SCALES = 8


def _decorrelation(h, state, params, aux=None):
    b = h.shape[0]
    if b < 2:
        raise ShapeMismatchError(
            f"decorrelation: batch covariance needs >= 2 rows, got {b}"
        )
    lam = params.decorr_lambda
    cov = tensor.batch_covariance(h)
    penalty = lam * float((cov * cov).sum())
    values = tensor.row_reduce(h * h, "sum") - penalty
    # d ||Cov||_F^2 / dH = 4 Z C / (B-1) minus its column means, Z centered
    centered = h - h.mean(axis=0, keepdims=True)
    m = 4.0 * tensor.matmul(centered, cov) / (b - 1)
    grad = 2.0 * h - lam * (m - m.mean(axis=0, keepdims=True))
    return GoodnessResult(values, grad)


def _whitened_energy(h, state, params, aux=None):
    w = state.whitening
    if w is None:
        raise ValueError("whitened_energy: state has no whitening matrix")
    y = tensor.matmul(h, w.T)
    values = tensor.row_reduce(y * y, "sum")
    grad = 2.0 * tensor.matmul(y, w)
    return GoodnessResult(values, grad)


def _pca_energy(h, state, params, aux=None):
    p = state.pca
    if p is None:
        raise ValueError("pca_energy: state has no component basis")
    y = tensor.matmul(h, p.T)
    values = tensor.row_reduce(y * y, "sum")
    grad = 2.0 * tensor.matmul(y, p)
    return GoodnessResult(values, grad)


def _game_theoretic(h, state, params, aux=None):
    if aux is not None:
        importance = aux["importance"]
    else:
        eps = params.shrinkage
        spread = np.sqrt(np.maximum(state.running_variance(), 0.0))
        spread_weight = spread / (spread.max() + eps)
        abs_h = np.abs(h)
        row_peak = abs_h.max(axis=1, keepdims=True)
        importance = (abs_h / (row_peak + eps)) * spread_weight
    sq = h * h
    values = tensor.row_reduce(sq * (1.0 + importance), "sum")
    grad = 2.0 * h * (1.0 + importance)
    return GoodnessResult(values, grad, aux={"importance": importance})


def _attention_weighted(h, state, params, aux=None):
    sq = h * h
    if aux is not None:
        alpha = aux["alpha"]
    else:
        shifted = sq - sq.max(axis=1, keepdims=True)
        weights = np.exp(shifted)
        alpha = weights / weights.sum(axis=1, keepdims=True)
    values = tensor.row_reduce(alpha * sq, "sum")
    grad = 2.0 * alpha * h
    return GoodnessResult(values, grad, aux={"alpha": alpha})


def _box_count_dimension(row):
    """Slope of log(occupied boxes) vs log(1/box size) on dyadic scales."""
    v = np.abs(row)
    lo = v.min()
    span = v.max() - lo
    if span < 1e-12:
        return 0.0
    xs = np.empty(BOX_COUNT_SCALES)
    ys = np.empty(BOX_COUNT_SCALES)
    for j in range(1, BOX_COUNT_SCALES + 1):
        boxes = 1 << j
        idx = np.floor((v - lo) / (span / boxes)).astype(np.int64)
        np.clip(idx, 0, boxes - 1, out=idx)
        xs[j - 1] = j * np.log(2.0)
        ys[j - 1] = np.log(len(np.unique(idx)))
    x_centered = xs - xs.mean()
    y_centered = ys - ys.mean()
    return float((x_centered * y_centered).sum() / (x_centered * x_centered).sum())


def _fractal_dimension(h, state, params, aux=None):
    if aux is not None:
        dims = aux["dimension"]
    else:
        dims = np.array([_box_count_dimension(row) for row in h]).reshape(-1, 1)
    values = tensor.row_reduce(h * h, "sum") + params.fractal_weight * dims
    # the box-count bonus is a non-differentiable reward; only the energy
    # term carries gradient
    grad = 2.0 * h
    return GoodnessResult(values, grad, aux={"dimension": dims})


BATCH_MODES = {
    "decorrelation": _decorrelation,
    "whitened_energy": _whitened_energy,
    "pca_energy": _pca_energy,
    "game_theoretic": _game_theoretic,
    "attention_weighted": _attention_weighted,
    "fractal_dimension": _fractal_dimension,
}


def goodness_batch(mode, h, state, params, frozen_aux=None):
    """Batch-context goodness; frozen_aux pins the constant-by-contract
    weights (importance, attention, box-count) for gradient checking."""
    if mode not in BATCH_MODES:
        raise ValueError(
            f"unknown batch mode {mode!r}, expected one of {sorted(BATCH_MODES)}"
        )
    h = tensor.as_matrix(h, "batch activations")
    return BATCH_MODES[mode](h, state, params, aux=frozen_aux)
