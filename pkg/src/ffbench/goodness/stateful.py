"""Goodness objectives driven by running statistics.

Values and gradients are always computed against the state as it stands;
when `update_state` is set the averages advance afterwards, so the
positive and negative passes of one training step see the same state.
"""

import numpy as np

from .. import tensor
from ..errors import FFBenchError
from .types import GoodnessResult

__all__ = ["STATEFUL_MODES", "goodness_stateful"]


def _hebbian(h, state, params):
    centered = h - state.running_mean
    values = tensor.row_reduce(centered * centered, "sum")
    return GoodnessResult(values, 2.0 * centered)


def _bcm(h, state, params):
    lam = params.bcm_lambda
    theta = state.bcm_threshold
    sq = h * h
    values = tensor.row_reduce(sq + lam * sq * (sq - theta), "sum")
    grad = 2.0 * h + lam * (4.0 * h * sq - 2.0 * theta * h)
    return GoodnessResult(values, grad)


def _predictive_coding(h, state, params):
    lam = params.pc_lambda
    err = h - state.pred_baseline
    values = tensor.row_reduce(h * h - lam * err * err, "sum")
    grad = 2.0 * h - 2.0 * lam * err
    return GoodnessResult(values, grad)


def _gaussian_energy(h, state, params):
    denom = state.running_variance() + params.shrinkage
    if (denom <= 0).any():
        raise FFBenchError(
            "gaussian_energy: non-positive variance estimate "
            f"(min {denom.min():.3e}); state is unusable"
        )
    centered = h - state.running_mean
    values = tensor.row_reduce(-0.5 * centered * centered / denom, "sum")
    grad = -centered / denom
    return GoodnessResult(values, grad)


STATEFUL_MODES = {
    "hebbian": _hebbian,
    "bcm": _bcm,
    "predictive_coding": _predictive_coding,
    "gaussian_energy": _gaussian_energy,
}


def goodness_stateful(mode, h, state, params, update_state=False):
    """Evaluate against the current state, then optionally advance it."""
    if mode not in STATEFUL_MODES:
        raise ValueError(
            f"unknown stateful mode {mode!r}, expected one of "
            f"{sorted(STATEFUL_MODES)}"
        )
    h = tensor.as_matrix(h, "stateful activations")
    if h.shape[1] != state.width:
        raise FFBenchError(
            f"stateful goodness: activation width {h.shape[1]} does not "
            f"match state width {state.width}"
        )
    result = STATEFUL_MODES[mode](h, state, params)
    if update_state:
        state.update_from_positive(h)
    return result
